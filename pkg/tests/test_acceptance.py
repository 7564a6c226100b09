"""Acceptance criteria A1-A12.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Runs are cached per module so the potential and switching checks (A7, A8)
reuse the traces produced by the other criteria.
"""

import math
import time
from functools import lru_cache

import numpy as np
import pytest

from adavara.adaoful import SCALED, THEORY, AdaOFUL, AdaOfulConfig, kappa_value
from adavara.baselines import TruncatedOFUL
from adavara.bandit_env import NoiseModel, random_instance, run
from adavara.harness.runner import play_mdp
from adavara.mdp_env import (
    BOUNDED_UNIFORM,
    g_star,
    make_rank_reduced_instance,
    make_tabular_instance,
    rollout_returns,
    solve_exact,
)
from adavara.precision import PrecisionState
from adavara.regression import RobustRegression
from adavara.rng import stream
from adavara.vara import Vara, config_for_instance
from oracles import dense_mu, projected_gd

pytestmark = pytest.mark.acceptance

SCALE = 0.1
MINUTE = 60.0


# bandit runs

@lru_cache(maxsize=None)
def bandit_runs(family, scale, dim, horizon, seeds, mode, algo="adaoful", coverage=False):
    """Traces plus the t=0 coverage flags, one per seed; returns ``(traces, initial, seconds)``."""
    start = time.perf_counter()
    traces, initial = [], []
    for seed in range(seeds):
        inst = random_instance(dim, seed, NoiseModel(family, scale))
        cfg = AdaOfulConfig(dim=dim, horizon=horizon, radius_mode=mode, radius_scale=SCALE)
        agent = AdaOFUL(cfg) if algo == "adaoful" else TruncatedOFUL(cfg)
        initial.append(agent.confidence_contains(inst.theta_star))
        traces.append(run(agent, inst, horizon, coverage=coverage))
    return traces, initial, time.perf_counter() - start


def median_at(traces, t):
    return float(np.median([tr.cum_regret[t - 1] for tr in traces]))


def a1():
    return bandit_runs("student_t", 1.0, 5, 2000, 200, THEORY, coverage=True)


def a2():
    return bandit_runs("zero", 0.0, 5, 4000, 20, SCALED)


def a3(nu):
    return bandit_runs("gaussian", nu, 5, 4000, 20, SCALED)


def a4(algo):
    return bandit_runs("pareto_symmetric", 1.0, 5, 5000, 20, SCALED, algo)


def a5(dim):
    return bandit_runs("gaussian", 1.0, dim, 4000, 20, SCALED)


# MDP runs

def a9_instance():
    return make_tabular_instance(3, 2, 3, BOUNDED_UNIFORM, seed=0)


@lru_cache(maxsize=None)
def vara_runs(mode, K, seeds):
    start = time.perf_counter()
    inst = a9_instance()
    runs = []
    for seed in range(seeds):
        agent = Vara(config_for_instance(inst, K, beta_mode=mode, beta_scale=SCALE), inst.phi, inst.phi_tilde)
        runs.append(play_mdp(agent, inst, K, seed, check_optimism=(mode == THEORY)))
    return runs, time.perf_counter() - start


def a9():
    return vara_runs(THEORY, 300, 50)


def a10():
    return vara_runs(SCALED, 2000, 10)


# criteria

def test_a1_coverage(report):
    traces, initial, secs = a1()
    covered = [ok and tr.always_covered for tr, ok in zip(traces, initial)]
    frac = float(np.mean(covered))
    passed = frac >= 0.85 and secs <= 10 * MINUTE
    report("A1", passed, f"coverage fraction {frac:.3f} (need >= 0.85), {secs:.0f}s")
    assert passed


def test_a2_noiseless_regret_flat(report):
    traces, _, secs = a2()
    r2, r4 = median_at(traces, 2000), median_at(traces, 4000)
    ratio = r4 / r2 if r2 > 0 else (1.0 if r4 == 0 else math.inf)
    passed = ratio <= 1.25 and secs <= 5 * MINUTE
    report("A2", passed, f"median regret T=2000 {r2:.1f}, T=4000 {r4:.1f}, ratio {ratio:.3f} "
                         f"(need <= 1.25), {secs:.0f}s")
    assert passed


def test_a3_variance_scaling(report):
    nus = (0.1, 0.4, 1.6)
    meds, secs = [], 0.0
    for nu in nus:
        traces, _, s = a3(nu)
        meds.append(median_at(traces, 4000))
        secs += s
    ratio = meds[2] / meds[0]
    monotone = meds[0] <= meds[1] <= meds[2]
    passed = monotone and 4.0 <= ratio <= 64.0 and secs <= 10 * MINUTE
    report("A3", passed, f"median regrets {', '.join(f'{m:.1f}' for m in meds)}; monotone={monotone}, "
                         f"ratio {ratio:.3f} (need [4, 64]), {secs:.0f}s")
    assert passed


def test_a4_heavy_tail_robustness(report):
    ada, _, s1 = a4("adaoful")
    trunc, _, s2 = a4("truncated")
    ma, mt = median_at(ada, 5000), median_at(trunc, 5000)
    passed = ma <= mt and s1 + s2 <= 10 * MINUTE
    report("A4", passed, f"median regret AdaOFUL {ma:.1f} vs truncated {mt:.1f}, {s1 + s2:.0f}s")
    assert passed


def test_a5_dimension_scaling(report):
    (t3, _, s3), (t6, _, s6) = a5(3), a5(6)
    m3, m6 = median_at(t3, 4000), median_at(t6, 4000)
    ratio = m6 / m3
    passed = 1.3 <= ratio <= 4.0 and s3 + s6 <= 10 * MINUTE
    report("A5", passed, f"median regret d=3 {m3:.1f}, d=6 {m6:.1f}, ratio {ratio:.3f} (need [1.3, 4]), "
                         f"{s3 + s6:.0f}s")
    assert passed


def test_a6_hessian_upper_bound(report):
    rng = np.random.default_rng(6)
    worst = -math.inf
    for _ in range(100):
        d = int(rng.integers(2, 7))
        n = int(rng.integers(5, 60))
        reg = RobustRegression(d, rng.uniform(0.1, 2.0), 1.0)
        for _ in range(n):
            reg.add(rng.normal(size=d), 3 * rng.standard_t(2.5), rng.uniform(0.2, 3.0), rng.uniform(0.05, 5.0))
        G = reg.gram()
        V = rng.normal(size=(1000, d))
        gv = np.einsum("ij,jk,ik->i", V, G, V)
        for _ in range(100):
            th = rng.normal(size=d)
            th *= rng.uniform() ** (1 / d) / np.linalg.norm(th)
            hv = np.einsum("ij,jk,ik->i", V, reg.hessian(th), V)
            worst = max(worst, float(np.max((hv - gv) / gv)))
    passed = worst <= 1e-9
    report("A6", passed, f"max relative excess of v'Hess v over v'H v: {worst:.3e} (need <= 1e-9)")
    assert passed


def test_a9_optimism_pessimism(report):
    runs, secs = a9()
    frac = float(np.mean([r.optimism_ok for r in runs]))
    exact = all(r.monotone_ok and r.clip_ok for r in runs)
    passed = frac >= 0.5 and exact and secs <= 15 * MINUTE
    report("A9", passed, f"optimism fraction {frac:.3f} (need >= 0.5), monotone and clipped on every run: "
                         f"{exact}, {secs:.0f}s")
    assert passed


def test_a10_vara_learns(report):
    runs, secs = a10()
    first = float(np.median([r.episode_regret[:1000].sum() for r in runs]))
    second = float(np.median([r.episode_regret[1000:].sum() for r in runs]))
    passed = second <= 0.6 * first and secs <= 15 * MINUTE
    report("A10", passed, f"median regret episodes 1-1000 {first:.2f}, 1001-2000 {second:.2f}, "
                          f"ratio {second / first:.3f} (need <= 0.6), {secs:.0f}s")
    assert passed


def test_a11_g_star_identity(report):
    start = time.perf_counter()
    rng = stream(11, "instance")
    worst = 0.0
    for i in range(20):
        S, A, H = int(rng.integers(2, 6)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        if i % 2:
            inst = make_rank_reduced_instance(S, A, H, int(rng.integers(2, 5)), BOUNDED_UNIFORM, seed=i,
                                              reward_scale=0.2)
        else:
            inst = make_tabular_instance(S, A, H, BOUNDED_UNIFORM, seed=i, reward_scale=0.2)
        pol = solve_exact(inst).policy
        g = g_star(inst, [pol])
        mc = rollout_returns(inst, pol, 10 ** 6, seed=i).var()
        worst = max(worst, abs(mc - g) / g)
    secs = time.perf_counter() - start
    passed = worst <= 0.02 and secs <= 5 * MINUTE
    report("A11", passed, f"max relative gap g_star vs Monte-Carlo variance {worst:.4f} (need <= 0.02), "
                          f"{secs:.0f}s")
    assert passed


def test_a12_oracle_equivalences(report):
    rng = np.random.default_rng(12)
    gaps = {}

    st = PrecisionState(6, 0.7)
    dense = 0.7 * np.eye(6)
    for _ in range(500):
        phi, sig = rng.normal(size=6), rng.uniform(0.3, 3.0)
        st.rank_one_update(phi, sig)
        dense += np.outer(phi, phi) / sig ** 2
    gaps["sherman_morrison"] = (float(np.max(np.abs(st.inverse - np.linalg.inv(dense)))), 1e-8)

    reg = RobustRegression(4, 0.5, 0.8)
    theta = rng.normal(size=4)
    for _ in range(80):
        phi = rng.normal(size=4)
        reg.add(phi, phi @ theta + 3 * rng.standard_t(2.5), rng.uniform(0.5, 2.0), rng.uniform(0.3, 3.0))
    sol = reg.solve(tol=1e-12, max_iters=100_000).solution
    ref = projected_gd(reg.features, reg.targets, reg.inv_tau, reg.lam, reg.radius, 100_000)
    diff = sol - ref
    gaps["solver_vs_pgd"] = (float(math.sqrt(diff @ reg.gram() @ diff)), 1e-5)

    cfg = AdaOfulConfig(dim=3, horizon=300, tau0=1e12, lam=1.0)
    ada = AdaOFUL(cfg)
    truth = np.array([0.2, -0.3, 0.1])
    G, m = cfg.lam * np.eye(3), np.zeros(3)
    for _ in range(100):
        phi = rng.normal(size=3)
        phi /= np.linalg.norm(phi)
        y = float(phi @ truth + 0.2 * rng.normal())
        rec = ada.observe(phi, y, 0.2)
        G += np.outer(phi, phi) / rec.sigma ** 2
        m += phi * y / rec.sigma ** 2
    wls = np.linalg.solve(G, m)
    assert np.linalg.norm(wls) < cfg.coeff_bound
    gaps["adaoful_vs_wls"] = (float(np.max(np.abs(ada.theta - wls))), 1e-6)

    th = rng.normal(size=4) * 0.3
    h = 1e-5
    eye = np.eye(4)
    _, grad = reg.value_and_grad(th)
    fd_grad = np.array([(reg.value_and_grad(th + h * e)[0] - reg.value_and_grad(th - h * e)[0]) / (2 * h)
                        for e in eye])
    fd_hess = np.array([(reg.value_and_grad(th + h * e)[1] - reg.value_and_grad(th - h * e)[1]) / (2 * h)
                        for e in eye])
    gaps["gradient_fd"] = (float(np.max(np.abs(grad - fd_grad)) / np.max(np.abs(grad))), 1e-7)
    hess = reg.hessian(th)
    gaps["curvature_fd"] = (float(np.max(np.abs(hess - fd_hess)) / np.max(np.abs(hess))), 1e-7)

    inst = make_rank_reduced_instance(4, 2, 1, 3, seed=12)
    agent = Vara(config_for_instance(inst, 30), inst.phi)
    recs = []
    for k in range(1, 21):
        recs.extend(agent.run_episode(inst, k, seed=12)[2])
    phis = np.array([inst.phi[r.s, r.a] for r in recs])
    ref_mu = dense_mu(phis, [r.sigma for r in recs], [r.s_next for r in recs], agent.config.lam, 4)
    gaps["transition_mu"] = (float(np.max(np.abs(agent.transition_estimate(0) - ref_mu))), 1e-9)

    passed = all(g <= tol for g, tol in gaps.values())
    report("A12", passed, "; ".join(f"{k} {g:.1e} (<= {tol:.0e})" for k, (g, tol) in gaps.items()))
    assert passed


def _bandit_potential_ok(traces, dim, horizon):
    cfg = AdaOfulConfig(dim=dim, horizon=horizon)
    bound = 2 * kappa_value(dim, horizon, cfg.feature_bound, cfg.lam, cfg.sigma_min)
    worst = max(tr.potential() / bound for tr in traces)
    return worst


def test_a7_elliptical_potential(report):
    ratios = [
        _bandit_potential_ok(a1()[0], 5, 2000),
        _bandit_potential_ok(a2()[0], 5, 4000),
        *(_bandit_potential_ok(a3(nu)[0], 5, 4000) for nu in (0.1, 0.4, 1.6)),
        _bandit_potential_ok(a4("adaoful")[0], 5, 5000),
        _bandit_potential_ok(a5(3)[0], 3, 4000),
        _bandit_potential_ok(a5(6)[0], 6, 4000),
    ]
    for r in a9()[0]:
        c = r.agent.config
        bound = 2 * c.d * math.log1p(c.K / (c.d * c.lam * c.sigma_min ** 2))
        for stage in r.agent.stages:
            for ws in (stage.weights, stage.weights_tilde):
                ratios.append(float(np.sum(np.minimum(1.0, np.square(ws)))) / bound)
    worst = max(ratios)
    passed = worst <= 1.0
    report("A7", passed, f"largest potential / bound over {len(ratios)} weight sequences: {worst:.4f} "
                         f"(need <= 1)")
    assert passed


def test_a8_rare_switching(report):
    runs = a9()[0] + a10()[0]
    worst = max(r.agent.state.triggers / r.agent.config.switch_bound for r in runs)
    total = sum(r.agent.state.triggers for r in runs)
    passed = all(r.agent.state.triggers <= r.agent.config.switch_bound for r in runs)
    report("A8", passed, f"{len(runs)} VARA runs, {total} triggers in total, largest triggers / bound "
                         f"{worst:.4f} (need <= 1)")
    assert passed
