"""Seeded execution of validated experiment configs and output writing."""

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from adavara.adaoful import AdaOFUL, AdaOfulConfig
from adavara.bandit_env import BanditInstance, NoiseModel, random_instance, run as run_bandit
from adavara.baselines import TruncatedOFUL, TruncationConfig, WlsOFUL
from adavara.errors import ConfigError
from adavara.mdp_env import make_rank_reduced_instance, make_tabular_instance, solve_exact
from adavara.vara import Vara, config_for_instance

BANDIT_COLUMNS = ("t", "arm_index", "inst_regret", "cum_regret", "nu", "sigma", "tau", "w", "beta", "theta_in_C")
MDP_COLUMNS = ("k", "h", "s", "a", "r", "sigma_hk", "b_hk", "trigger", "episode_regret")


@dataclass
class SeedResult:
    seed: int
    columns: tuple
    rows: list
    final_regret: float
    runtime: float
    stats: dict = field(default_factory=dict)
    weights: list = field(default_factory=list)


@dataclass
class SummaryRecord:
    name: str
    track: str
    algorithm: str
    seeds: list
    final_regret: list
    median: float
    iqr: float
    counters: dict
    runtime: list

    def lines(self):
        out = [f"name = {self.name}", f"track = {self.track}", f"algorithm = {self.algorithm}",
               f"seeds = {','.join(map(str, self.seeds))}"]
        for s, r in zip(self.seeds, self.final_regret):
            out.append(f"final_regret.seed{s} = {_fmt(r)}")
        out.append(f"median_final_regret = {_fmt(self.median)}")
        out.append(f"iqr_final_regret = {_fmt(self.iqr)}")
        for key in sorted(self.counters):
            out.append(f"{key} = {_fmt(self.counters[key])}")
        return out

    def timing_lines(self):
        out = [f"runtime_seconds.seed{s} = {r:.3f}" for s, r in zip(self.seeds, self.runtime)]
        out.append(f"runtime_seconds.total = {sum(self.runtime):.3f}")
        return out


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# bandit track

def bandit_instance(cfg, seed):
    env = cfg.env
    B = env.get("coeff_bound", 1.0)
    L = env.get("feature_bound", 1.0)
    noise = NoiseModel(env["noise"]["family"], env["noise"].get("scale", 1.0), env["noise"].get("shape"))
    if "theta_star" in env:
        theta = np.array(env["theta_star"], dtype=float)
    else:
        theta = random_instance(env["dim"], env.get("instance_seed", seed), coeff_bound=B).theta_star
    arms = env["arms"]
    return BanditInstance(theta, noise, arms["source"], arms.get("vectors"), arms.get("num_arms", 20), seed, L)


def bandit_agent(cfg):
    a, env = cfg.agent, cfg.env
    kw = dict(dim=env["dim"], horizon=max(a["horizon"], 1), coeff_bound=env.get("coeff_bound", 1.0),
              feature_bound=env.get("feature_bound", 1.0))
    for src, dst in (("delta", "delta"), ("lambda", "lam"), ("tau0", "tau0"), ("sigma_min", "sigma_min"),
                     ("radius_mode", "radius_mode"), ("radius_scale", "radius_scale"),
                     ("c0_override", "c0_override"), ("c1_override", "c1_override"), ("solver_tol", "solver_tol")):
        if src in a:
            kw[dst] = a[src]
    conf = AdaOfulConfig(**kw)
    if a["algorithm"] == "adaoful":
        return AdaOFUL(conf)
    if a["algorithm"] == "wls":
        return WlsOFUL(conf)
    return TruncatedOFUL(conf, TruncationConfig(a.get("c_trunc", 1.0), a.get("nu_max")))


def _run_bandit(cfg, seed):
    inst = bandit_instance(cfg, seed)
    agent = bandit_agent(cfg)
    tr = run_bandit(agent, inst, cfg.agent["horizon"])
    rows = [
        (int(tr.t[i]), int(tr.arm_index[i]), tr.inst_regret[i], tr.cum_regret[i], tr.nu[i], tr.sigma[i],
         tr.tau[i], tr.w[i], tr.beta[i], int(tr.theta_in_C[i]))
        for i in range(len(tr))
    ]
    stats = {"covered_rounds": int(tr.theta_in_C.sum()), "always_covered": tr.always_covered,
             "solver_warnings": tr.solver_warnings, "potential": tr.potential()}
    return SeedResult(seed, BANDIT_COLUMNS, rows, tr.final_regret, tr.runtime, stats, [tr.w])


# mdp track

def mdp_instance(cfg, seed):
    env = cfg.env
    iseed = env.get("instance_seed", seed)
    common = dict(reward_family=env["reward_family"], seed=iseed, value_bound=env.get("value_bound", 1.0),
                  reward_scale=env.get("reward_scale", 0.1), s1=env.get("start_state", 0))
    if env["kind"] == "tabular":
        return make_tabular_instance(env["num_states"], env["num_actions"], env["horizon"], **common)
    return make_rank_reduced_instance(env["num_states"], env["num_actions"], env["horizon"], env["dim"], **common)


def mdp_agent(cfg, inst):
    a = cfg.agent
    over = {}
    for src, dst in (("delta", "delta"), ("lambda", "lam"), ("sigma_min", "sigma_min"), ("tau0", "tau0"),
                     ("tilde_tau0", "tilde_tau0"), ("beta_mode", "beta_mode"), ("beta_scale", "beta_scale"),
                     ("beta_v_constant", "beta_v_constant"), ("sigma_R", "sigma_R"), ("sigma_R2", "sigma_R2"),
                     ("variance_bound", "variance_bound"), ("solver_tol", "solver_tol")):
        if src in a:
            over[dst] = a[src]
    return Vara(config_for_instance(inst, a["episodes"], **over), inst.phi, inst.phi_tilde)


@dataclass
class MdpRun:
    agent: Vara
    episode_regret: np.ndarray
    optimism_violations: int
    optimism_ok: bool
    monotone_ok: bool
    clip_ok: bool
    log: list


def play_mdp(agent, inst, K, seed, check_optimism=True):
    """Run ``K`` episodes, tracking exact regret and value-function invariants."""
    exact = solve_exact(inst)
    Qs = exact.Q
    Hv = agent.config.value_bound
    regrets = np.zeros(K)
    viol = 0
    mono = clip = True
    prev_up, prev_lo = agent.Q_upper.copy(), agent.Q_lower.copy()
    cache = {}
    log = []
    tol = 1e-12
    for k in range(1, K + 1):
        _, pol, steps = agent.run_episode(inst, k, seed=seed)
        key = pol.tobytes()
        if key not in cache:
            cache[key] = solve_exact(inst, pol).V_pi[0][inst.s1]
        regrets[k - 1] = max(exact.V[0][inst.s1] - cache[key], 0.0)
        up, lo = agent.Q_upper, agent.Q_lower
        if steps[0].trigger:
            mono &= bool(np.all(up <= prev_up + tol) and np.all(lo >= prev_lo - tol))
            clip &= bool(np.all((up >= 0) & (up <= Hv) & (lo >= 0) & (lo <= Hv)))
            prev_up, prev_lo = up.copy(), lo.copy()
        if check_optimism:
            bad = np.any((lo > Qs + tol) | (Qs > up + tol), axis=(1, 2))
            viol += int(bad.sum())
        log.append(steps)
    return MdpRun(agent, regrets, viol, viol == 0, mono, clip, log)


def _run_mdp(cfg, seed):
    start = time.perf_counter()
    inst = mdp_instance(cfg, seed)
    agent = mdp_agent(cfg, inst)
    res = play_mdp(agent, inst, cfg.agent["episodes"], seed)
    H = inst.H
    rows = []
    for k, steps in enumerate(res.log, start=1):
        for st in steps:
            last = st.h == H - 1
            rows.append((st.k, st.h + 1, st.s, st.a, st.r, st.sigma, st.b, int(st.trigger),
                         res.episode_regret[k - 1] if last else ""))
    stats = {"triggers": agent.state.triggers, "switch_bound": agent.config.switch_bound,
             "optimism_violations": res.optimism_violations, "monotone": res.monotone_ok,
             "clipped": res.clip_ok, "solver_warnings": agent.state.solver_warnings}
    weights = [np.array(s.weights) for s in agent.stages] + [np.array(s.weights_tilde) for s in agent.stages]
    return SeedResult(seed, MDP_COLUMNS, rows, float(res.episode_regret.sum()),
                      time.perf_counter() - start, stats, weights)


def run_seed(cfg, seed):
    return _run_bandit(cfg, seed) if cfg.track == "bandit" else _run_mdp(cfg, seed)


def run_seeds(cfg, seeds=None):
    seeds = list(cfg.run.seeds if seeds is None else seeds)
    if cfg.run.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.run.workers, len(seeds))) as pool:
            return list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    return [run_seed(cfg, s) for s in seeds]


def summarize(cfg, results):
    finals = [r.final_regret for r in results]
    q25, q50, q75 = np.percentile(finals, [25, 50, 75])
    counters = {}
    for r in results:
        for key, val in r.stats.items():
            counters[f"{key}.seed{r.seed}"] = val
    if cfg.track == "bandit":
        counters["seeds_always_covered"] = sum(bool(r.stats["always_covered"]) for r in results)
    else:
        counters["total_triggers"] = sum(r.stats["triggers"] for r in results)
        counters["seeds_without_optimism_violations"] = sum(r.stats["optimism_violations"] == 0 for r in results)
    return SummaryRecord(cfg.run.name, cfg.track, cfg.algorithm, [r.seed for r in results], finals,
                         float(q50), float(q75 - q25), counters, [r.runtime for r in results])


def trace_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([_fmt(x) if x != "" else "" for x in row])
    return buf.getvalue()


def write_outputs(cfg, results, out=None):
    out = out or cfg.run.out
    try:
        os.makedirs(out, exist_ok=True)
        written = []
        if "trace" in cfg.run.emit:
            for r in results:
                path = os.path.join(out, f"trace_seed{r.seed}.csv")
                with open(path, "w", encoding="utf-8", newline="") as fh:
                    fh.write(trace_csv(r))
                written.append(path)
        summary = summarize(cfg, results)
        if "summary" in cfg.run.emit:
            path = os.path.join(out, "summary.txt")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(summary.lines()) + "\n")
            with open(os.path.join(out, "timing.txt"), "w", encoding="utf-8") as fh:
                fh.write("\n".join(summary.timing_lines()) + "\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc.strerror or exc}") from exc
    return summary, written


def run_experiment(cfg, seeds=None, out=None):
    results = run_seeds(cfg, seeds)
    summary, written = write_outputs(cfg, results, out)
    return results, summary, written


def _comparable(cfg):
    return cfg.track, cfg.env, tuple(cfg.run.seeds)


def compare(cfgs, out=None):
    """Paired per-seed final-regret differences of the first config against each other one."""
    if len(cfgs) < 2:
        raise ConfigError("compare needs at least two configs")
    base = cfgs[0]
    for other in cfgs[1:]:
        if _comparable(other) != _comparable(base):
            raise ConfigError(f"{other.source or other.run.name} does not share the environment and seeds "
                              f"of {base.source or base.run.name}")
        if other.track == "bandit" and other.agent["horizon"] != base.agent["horizon"]:
            raise ConfigError("compared bandit experiments must share the horizon")
        if other.track == "mdp" and other.agent["episodes"] != base.agent["episodes"]:
            raise ConfigError("compared MDP experiments must share the number of episodes")
    labels = []
    for i, c in enumerate(cfgs):
        lab = c.run.name
        labels.append(lab if lab not in labels else f"{lab}_{i}")
    finals = [[r.final_regret for r in run_seeds(c)] for c in cfgs]
    header = ["seed"] + [f"regret_{l}" for l in labels] + [f"diff_{labels[0]}_minus_{l}" for l in labels[1:]]
    rows = []
    for j, seed in enumerate(base.run.seeds):
        vals = [f[j] for f in finals]
        rows.append([seed] + vals + [vals[0] - v for v in vals[1:]])
    arr = np.array([r[1:] for r in rows], dtype=float)
    rows.append(["median"] + list(np.median(arr, axis=0)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[0]] + [_fmt(x) for x in r[1:]])
    text = buf.getvalue()
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "compare.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
