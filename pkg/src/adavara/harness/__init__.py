"""Experiment harness: configuration loading, seeded runs, summaries and the CLI."""
