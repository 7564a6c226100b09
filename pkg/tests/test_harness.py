import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from adavara.errors import ConfigError
from adavara.harness import config as cfgmod
from adavara.harness.cli import main
from adavara.harness.runner import compare, run_experiment, run_seeds

BANDIT = """\
track: bandit
agent:
  algorithm: {algo}
  horizon: {T}
  radius_mode: scaled
env:
  dim: 3
  noise: {{family: gaussian, scale: 0.5}}
  arms: {{source: fresh_unit, num_arms: 8}}
run:
  seeds: {seeds}
  name: {name}
"""

MDP = """\
track: mdp
agent:
  algorithm: vara
  episodes: 6
  beta_mode: scaled
env:
  kind: rank_reduced
  num_states: 3
  num_actions: 2
  horizon: 2
  dim: 2
  reward_family: bounded_uniform
  instance_seed: 1
run:
  seeds: [0, 1]
"""


def bandit_text(algo="adaoful", T=10, seeds=(0,), name="mini"):
    return BANDIT.format(algo=algo, T=T, seeds=list(seeds), name=name)


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_bandit_trace_rows(tmp_path):
    cfg = cfgmod.load_text(bandit_text())
    _, summary, written = run_experiment(cfg, out=str(tmp_path))
    rows = read_trace(tmp_path / "trace_seed0.csv")
    assert rows[0] == ["t", "arm_index", "inst_regret", "cum_regret", "nu", "sigma", "tau", "w", "beta",
                       "theta_in_C"]
    assert len(rows) == 11
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 11))
    assert float(rows[-1][3]) == summary.final_regret[0]
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "timing.txt").exists()


def test_reruns_byte_identical(tmp_path):
    cfg = cfgmod.load_text(bandit_text(seeds=(0, 1)))
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(cfg, out=str(a))
    run_experiment(cfg, out=str(b))
    for name in ("trace_seed0.csv", "trace_seed1.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_worker_pool_matches_serial():
    serial = cfgmod.load_text(bandit_text(seeds=(0, 1, 2)))
    pooled = cfgmod.load_text(bandit_text(seeds=(0, 1, 2)).replace("  name: mini", "  name: mini\n  workers: 3"))
    for r1, r2 in zip(run_seeds(serial), run_seeds(pooled)):
        assert r1.rows == r2.rows


def test_three_seed_median(tmp_path):
    cfg = cfgmod.load_text(bandit_text(T=30, seeds=(4, 5, 6)))
    _, summary, _ = run_experiment(cfg, out=str(tmp_path))
    assert summary.median == sorted(summary.final_regret)[1]
    text = (tmp_path / "summary.txt").read_text()
    assert f"median_final_regret = {summary.median!r}" in text


def test_summary_recomputable_from_traces(tmp_path):
    cfg = cfgmod.load_text(bandit_text(T=25, seeds=(0, 1)))
    _, summary, _ = run_experiment(cfg, out=str(tmp_path))
    for seed, final in zip(summary.seeds, summary.final_regret):
        rows = read_trace(tmp_path / f"trace_seed{seed}.csv")[1:]
        assert sum(float(r[2]) for r in rows) == pytest.approx(final, abs=1e-12)
        assert summary.counters[f"covered_rounds.seed{seed}"] == sum(int(r[9]) for r in rows)


def test_mdp_trace_schema(tmp_path):
    cfg = cfgmod.load_text(MDP)
    results, summary, _ = run_experiment(cfg, out=str(tmp_path))
    rows = read_trace(tmp_path / "trace_seed0.csv")
    assert rows[0] == ["k", "h", "s", "a", "r", "sigma_hk", "b_hk", "trigger", "episode_regret"]
    assert len(rows) == 1 + 6 * 2
    assert all((r[8] == "") == (r[1] == "1") for r in rows[1:])
    total = sum(float(r[8]) for r in rows[1:] if r[8])
    assert total == pytest.approx(summary.final_regret[0])
    assert results[0].stats["triggers"] <= results[0].stats["switch_bound"]


def test_compare_with_itself_is_zero(tmp_path):
    cfg = cfgmod.load_text(bandit_text(T=15, seeds=(0, 1)))
    text = compare([cfg, cfg], out=str(tmp_path))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["seed", "regret_mini", "regret_mini_1", "diff_mini_minus_mini_1"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "median"]
    assert all(float(r[3]) == 0.0 for r in rows[1:])
    assert (tmp_path / "compare.csv").read_text() == text


def test_compare_adaoful_wls_smoke():
    a = cfgmod.load_text(bandit_text(T=20, seeds=(0, 1), name="ada"))
    b = cfgmod.load_text(bandit_text("wls", T=20, seeds=(0, 1), name="wls"))
    rows = list(csv.reader(io.StringIO(compare([a, b]))))
    assert np.all(np.isfinite(np.array([r[1:] for r in rows[1:]], dtype=float)))


def test_compare_rejects_mismatched_environments():
    a = cfgmod.load_text(bandit_text(seeds=(0, 1)))
    b = cfgmod.load_text(bandit_text(seeds=(0, 2)))
    with pytest.raises(ConfigError):
        compare([a, b])
    with pytest.raises(ConfigError):
        compare([a])


@pytest.mark.parametrize("text,line,needle", [
    (bandit_text().replace("horizon: 10", "horizon: -3"), 4, "agent.horizon"),
    (bandit_text().replace("family: gaussian", "family: cauchy"), 8, "env.noise"),
    (bandit_text().replace("  dim: 3\n", "  dim: 3\n  colour: red\n"), 8, "colour"),
    ("track: bandit\nagent: [1, 2\n", None, "YAML"),
    (MDP.replace("bounded_uniform", "student_t3"), None, "sigma_R2"),
])
def test_config_errors_are_located(text, line, needle):
    with pytest.raises(ConfigError) as exc:
        cfgmod.load_text(text, "x.yaml")
    msg = str(exc.value)
    assert needle.lower() in msg.lower()
    if line is not None:
        assert msg.startswith(f"x.yaml:{line}:")


def test_output_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv(cfgmod.OUT_ENV_VAR, str(tmp_path / "envout"))
    cfg = cfgmod.load_text(bandit_text())
    assert cfg.run.out == str(tmp_path / "envout")
    monkeypatch.delenv(cfgmod.OUT_ENV_VAR)
    assert cfgmod.load_text(bandit_text()).run.out == os.path.join("results", "mini")


def test_cli_run_validate_and_exit_codes(tmp_path, capsys):
    good = write(tmp_path, bandit_text(T=5))
    assert main(["validate", good]) == 0
    assert "ok" in capsys.readouterr().out
    out = tmp_path / "out"
    assert main(["run", good, "--seeds", "3,4", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["summary.txt", "timing.txt", "trace_seed3.csv", "trace_seed4.csv"]
    bad = write(tmp_path, bandit_text().replace("horizon: 10", "horizon: x"), "bad.yaml")
    assert main(["validate", bad]) == 2
    assert f"{bad}:4:" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", good, "--out", str(blocker / "sub")]) == 3
    assert main(["compare", good, good, "--out", str(tmp_path / "cmp")]) == 0
    assert (tmp_path / "cmp" / "compare.csv").exists()


def test_cli_bad_seed_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", write(tmp_path, bandit_text()), "--seeds", "1,1"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, bandit_text(T=3))
    proc = subprocess.run([sys.executable, "-m", "adavara", "validate", cfg], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.parametrize("name", sorted(os.listdir(os.path.join(os.path.dirname(__file__), "..", "configs"))))
def test_shipped_configs_validate(name):
    cfgmod.load(os.path.join(os.path.dirname(__file__), "..", "configs", name))
