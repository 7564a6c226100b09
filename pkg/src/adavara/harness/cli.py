"""Command-line entry point: ``run``, ``compare`` and ``validate``."""

import argparse
import os
import sys

from adavara.errors import ConfigError
from adavara.harness import config as cfgmod
from adavara.harness.runner import compare, run_experiment


def _seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds or any(s < 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError("seeds must be distinct nonnegative integers")
    return seeds


def build_parser():
    p = argparse.ArgumentParser(prog="adavara", description="Seeded heavy-tailed bandit and linear-MDP experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--seeds", type=_seeds, help="override run.seeds, e.g. 0,1,2")
    r.add_argument("--out", help=f"output directory (default: run.out, then ${cfgmod.OUT_ENV_VAR})")
    c = sub.add_parser("compare", help="paired per-seed regret comparison of two configs")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--out", help="directory for compare.csv")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = cfgmod.load(args.config)
            print(f"{args.config}: ok ({cfg.track}, {cfg.algorithm}, {len(cfg.run.seeds)} seeds)")
            return 0
        if args.command == "run":
            cfg = cfgmod.load(args.config)
            out = args.out
            if args.seeds is not None:
                cfg.run.seeds = args.seeds
            _, summary, written = run_experiment(cfg, out=out)
            print("\n".join(summary.lines()))
            for path in written:
                print(f"wrote {path}", file=sys.stderr)
            return 0
        cfgs = [cfgmod.load(args.config_a), cfgmod.load(args.config_b)]
        out = args.out or os.environ.get(cfgmod.OUT_ENV_VAR)
        sys.stdout.write(compare(cfgs, out=out))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
