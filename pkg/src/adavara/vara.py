"""VARA: variance-aware optimistic value iteration for episodic linear MDPs.

Stages are indexed ``h = 0 .. H-1`` and episodes ``k = 1 .. K``. Per stage the
agent keeps two precision matrices (reward features ``phi`` and second-moment
features ``phi_tilde``), robust regressions for the reward and squared reward,
and the transition accumulator ``A_h = sum sigma^-2 phi delta(s')^T``.
Value functions are rebuilt only when some stage's precision determinant has
doubled since the last rebuild.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from adavara.adaoful import AUTO, SCALED, THEORY, agent_tolerance
from adavara.errors import DomainError
from adavara.precision import PrecisionState
from adavara.regression import RobustRegression
from adavara.rng import stream

LOG2 = math.log(2.0)


@dataclass
class VaraConfig:
    """Hyper-parameters of :class:`Vara`.

    ``variance_bound`` is the bound on the return variance (the squared
    quantity itself). ``sigma_min=None`` selects
    ``sqrt(H^1.5 d^5 Hv^2 + d sigma_R2) K^(-1/4)`` where ``Hv`` is
    ``value_bound``. In ``'scaled'`` mode every radius is multiplied by
    ``beta_scale`` and the two structural inflation factors of the variance
    estimate by ``max(1, beta_scale * factor)``.
    """

    H: int
    K: int
    d: int
    num_states: int
    coeff_bound: float
    value_bound: float
    variance_bound: float
    sigma_R: float
    sigma_R2: float
    delta: float = 0.05
    lam: Optional[float] = None
    sigma_min: Optional[float] = None
    tau0: Union[float, str] = AUTO
    tilde_tau0: Union[float, str] = AUTO
    beta_mode: str = THEORY
    beta_scale: float = 0.1
    beta_v_constant: float = 1.0
    solver_tol: Optional[float] = None
    solver_max_iters: int = 5_000

    def __post_init__(self):
        for name in ("H", "K", "d", "num_states"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer")
        for name in ("coeff_bound", "value_bound", "variance_bound", "beta_scale", "beta_v_constant"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive and finite")
        for name in ("sigma_R", "sigma_R2"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be finite and nonnegative; heavy-tailed rewards "
                                  "need an explicit finite bound")
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if self.beta_mode not in (THEORY, SCALED):
            raise DomainError(f"beta_mode must be 'theory' or 'scaled', got {self.beta_mode!r}")
        if self.lam is None:
            self.lam = 1.0 / (self.value_bound ** 2 + self.coeff_bound ** 2)
        if self.sigma_min is None:
            self.sigma_min = math.sqrt(self.H ** 1.5 * self.d ** 5 * self.value_bound ** 2
                                       + self.d * self.sigma_R2) * self.K ** -0.25
        if not (self.lam > 0 and self.sigma_min > 0):
            raise DomainError("lam and sigma_min must be positive")
        for name in ("tau0", "tilde_tau0"):
            v = getattr(self, name)
            if isinstance(v, str):
                if v != AUTO:
                    raise DomainError(f"{name} must be a positive number or 'auto'")
            elif not v > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def log_factor(self):
        return math.log(2.0 * self.H * self.K ** 2 / self.delta)

    @property
    def c0(self):
        return 1.0 / (6.0 * math.sqrt(3.0 * self.log_factor))

    @property
    def c1(self):
        return 1.0 / (42.0 * self.log_factor)

    @property
    def kappa(self):
        return self.d * math.log1p(self.K / (self.d * self.lam * self.sigma_min ** 2))

    @property
    def tau0_value(self):
        if self.tau0 == AUTO:
            return max(math.sqrt(2 * self.kappa), 2 * math.sqrt(self.d)) / math.sqrt(self.log_factor)
        return float(self.tau0)

    @property
    def tilde_tau0_value(self):
        if self.tilde_tau0 == AUTO:
            lead = math.sqrt(2 * self.kappa) * self.sigma_R2 / self.sigma_min
            return max(lead, 2 * math.sqrt(self.d)) / math.sqrt(self.log_factor)
        return float(self.tilde_tau0)

    @property
    def switch_bound(self):
        """Upper bound on the number of value-function rebuilds."""
        return self.d * self.H * math.log2(1.0 + self.K / (self.lam * self.sigma_min ** 2))

    def inflation(self, factor):
        if self.beta_mode == SCALED:
            return max(1.0, self.beta_scale * factor)
        return factor


@dataclass(frozen=True)
class BetaConstants:
    beta_R: float
    beta_R2: float
    beta_0: float
    beta_V: float
    iota_0: float
    iota_1: float

    @property
    def beta(self):
        return self.beta_R + self.beta_V


def _iota0(c, L, B):
    d, K, lam, Hv, smin = c.d, c.K, c.lam, c.value_bound, c.sigma_min
    return max(
        math.log1p(8 * L * K / (lam * Hv * math.sqrt(d) * smin ** 2)),
        math.log1p(32 * B ** 2 * K ** 2 / (math.sqrt(d) * lam ** 3 * Hv ** 2 * smin ** 4)),
        math.log1p(K / (lam * smin ** 2)),
    )


def _iota1(c, L, B, iota0):
    d, H, K, lam, smin = c.d, c.H, c.K, c.lam, c.sigma_min
    return max(
        iota0,
        math.log(4 * H * K ** 2 / c.delta),
        math.log1p(4 * L * math.sqrt(d ** 3 * H) / smin),
        math.log1p(8 * math.sqrt(d ** 7) * H * B ** 2 / (lam * smin ** 2)),
    )


def beta_constants(c: VaraConfig) -> BetaConstants:
    """Confidence radii. ``B = 3 (beta_R + beta_V)`` is resolved by two fixed-point passes."""
    d, lam, W, Hv = c.d, c.lam, c.coeff_bound, c.value_bound
    rlog = math.sqrt(c.log_factor)
    ridge = 5 * math.sqrt(lam) * W
    k = c.kappa
    beta_R = 128 * (math.sqrt(k) + math.sqrt(d)) * rlog + ridge
    beta_R2 = 128 * (math.sqrt(k) * c.sigma_R2 / c.sigma_min + math.sqrt(d)) * rlog + ridge
    L = W + Hv * math.sqrt(d * c.K / lam)
    beta_V, iota0, iota1 = 0.0, 0.0, 0.0
    for _ in range(2):
        B = 3 * (beta_R + beta_V)
        i0 = _iota0(c, L, B)
        i1 = _iota1(c, L, B, i0)
        iota0, iota1 = max(iota0, i0), max(iota1, i1)
        beta_V = max(beta_V, c.beta_v_constant * math.sqrt(d) * iota1 ** 2 + math.sqrt(d * lam) * Hv)
    beta_0 = 4 * Hv / c.sigma_min * math.sqrt(d ** 3 * c.H * iota0 ** 2 + math.log(2 * c.H / c.delta)) \
        + 3 * math.sqrt(d * lam) * Hv
    s = c.beta_scale if c.beta_mode == SCALED else 1.0
    return BetaConstants(s * beta_R, s * beta_R2, s * beta_0, s * beta_V, iota0, iota1)


@dataclass
class ValueSnapshot:
    episode: int
    w_upper: np.ndarray
    w_lower: np.ndarray
    beta: float
    inverse: np.ndarray


@dataclass
class StepRecord:
    k: int
    h: int
    s: int
    a: int
    r: float
    s_next: int
    sigma: float
    b: float
    w: float
    w_tilde: float
    tau: float
    tau_tilde: float
    trigger: bool


@dataclass
class ErrorTerms:
    R: float
    U: float
    E: float
    J: float
    var_reward: float
    var_value: float


class _Stage:
    def __init__(self, c: VaraConfig):
        d = c.d
        self.prec = PrecisionState(d, c.lam)
        self.prec_tilde = PrecisionState(d, c.lam)
        self.reward = RobustRegression(d, c.lam, c.coeff_bound)
        self.second = RobustRegression(d, c.lam, c.coeff_bound)
        self.theta = np.zeros(d)
        self.psi = np.zeros(d)
        self.accum = np.zeros((d, c.num_states))
        self.ref_log_det = self.prec.log_det
        self.upper = []
        self.lower = []
        self.weights = []
        self.weights_tilde = []


@dataclass
class VaraState:
    k: int = 0
    k_last: int = 1
    triggers: int = 0
    trigger_episodes: list = field(default_factory=list)
    solver_warnings: int = 0


class Vara:
    """VARA agent for a finite-state linear MDP with feature maps ``phi``, ``phi_tilde``."""

    name = "vara"

    def __init__(self, config: VaraConfig, phi, phi_tilde=None):
        phi = np.asarray(phi, dtype=float)
        phi_tilde = phi if phi_tilde is None else np.asarray(phi_tilde, dtype=float)
        if phi.ndim != 3 or phi.shape[0] != config.num_states or phi.shape[2] != config.d:
            raise DomainError("phi must have shape (S, A, d) consistent with the config")
        if phi_tilde.shape != phi.shape:
            raise DomainError("phi_tilde must match phi's shape")
        self.config = c = config
        self.phi = phi
        self.phi_tilde = phi_tilde
        self.num_actions = phi.shape[1]
        self.betas = beta_constants(c)
        self.beta = self.betas.beta
        self.tau0 = c.tau0_value
        self.tilde_tau0 = c.tilde_tau0_value
        self.c0 = c.c0
        self.stages = [_Stage(c) for _ in range(c.H)]
        self.state = VaraState()
        shape = (c.H, c.num_states, self.num_actions)
        self.Q_upper = np.full(shape, float(c.value_bound))
        self.Q_lower = np.zeros(shape)
        self._flat = phi.reshape(-1, c.d)
        self._inflate_E = c.inflation(c.d ** 3 * c.H)
        self._inflate_b = c.inflation(c.value_bound * c.d ** 2.5 * c.H)
        self._w_term = c.coeff_bound / math.sqrt(c.c1 * c.d)

    # value functions
    def q_bar(self, h, s, a):
        return float(self.Q_upper[h, s, a])

    def q_under(self, h, s, a):
        return float(self.Q_lower[h, s, a])

    def v_bar(self, h):
        """Optimistic state values at stage ``h`` (zero past the horizon)."""
        if h >= self.config.H:
            return np.zeros(self.config.num_states)
        return self.Q_upper[h].max(axis=1)

    def v_under(self, h):
        if h >= self.config.H:
            return np.zeros(self.config.num_states)
        return self.Q_lower[h].max(axis=1)

    def snapshot_values(self, h):
        """``(Q_upper, Q_lower)`` for stage ``h`` recomputed from the snapshot lists."""
        c = self.config
        Hv = c.value_bound
        S, A = c.num_states, self.num_actions
        up = np.full(S * A, Hv)
        lo = np.zeros(S * A)
        st = self.stages[h]
        for su, sl in zip(st.upper, st.lower):
            bonus = su.beta * np.sqrt(np.einsum("ij,jk,ik->i", self._flat, su.inverse, self._flat))
            up = np.minimum(up, np.minimum(self._flat @ su.w_upper + bonus, Hv))
            lo = np.maximum(lo, np.maximum(self._flat @ sl.w_lower - bonus, 0.0))
        return np.clip(up, 0.0, Hv).reshape(S, A), np.clip(lo, 0.0, Hv).reshape(S, A)

    def act(self, h, s):
        return int(np.argmax(self.Q_upper[h, s]))

    def policy(self):
        """Greedy policy table ``(H, S)`` for the current optimistic values."""
        return self.Q_upper.argmax(axis=2)

    # estimates
    def transition_estimate(self, h):
        """``mu_h = H_h^{-1} A_h`` (``d x S``)."""
        st = self.stages[h]
        return st.prec.inverse @ st.accum

    def _p_hat(self, h, phi, values):
        st = self.stages[h]
        return float(phi @ (st.prec.inverse @ (st.accum @ values)))

    def est_reward_variance(self, h, s, a):
        st = self.stages[h]
        mean = min(max(float(self.phi[s, a] @ st.theta), 0.0), self.config.value_bound)
        return float(self.phi_tilde[s, a] @ st.psi) - mean ** 2

    def est_value_variance(self, h, s, a):
        Hv2 = self.config.value_bound ** 2
        v = self.v_bar(h + 1)
        phi = self.phi[s, a]
        second = min(max(self._p_hat(h, phi, v ** 2), 0.0), Hv2)
        first = min(max(self._p_hat(h, phi, v), 0.0), Hv2)
        return second - first ** 2

    def norms(self, h, s, a):
        st = self.stages[h]
        return st.prec.weighted_norm_inv(self.phi[s, a]), st.prec_tilde.weighted_norm_inv(self.phi_tilde[s, a])

    def error_terms(self, h, s, a):
        c = self.config
        Hv = c.value_bound
        bt = self.betas
        n, nt = self.norms(h, s, a)
        gap = self._p_hat(h, self.phi[s, a], self.v_bar(h + 1) - self.v_under(h + 1))
        R = bt.beta_R2 * nt + 2 * Hv * bt.beta_R * n
        U = min(c.variance_bound, 11 * Hv * bt.beta_0 * n + 4 * Hv * gap)
        E = min(Hv ** 2, 2 * Hv * bt.beta_0 * n + Hv * gap)
        vr = self.est_reward_variance(h, s, a)
        vv = self.est_value_variance(h, s, a)
        return ErrorTerms(R, U, E, vr + vv + R + U, vr, vv)

    def sigma_hk(self, h, s, a):
        c = self.config
        n, nt = self.norms(h, s, a)
        b = max(n, nt)
        et = self.error_terms(h, s, a)
        sq = max(c.sigma_min ** 2, self._inflate_E * et.E, et.J,
                 (b / self.c0) ** 2, (self._w_term + self._inflate_b) * b)
        return math.sqrt(sq)

    # rare switching
    def needs_update(self):
        return any(st.prec.log_det - st.ref_log_det >= LOG2 for st in self.stages)

    def rebuild_values(self, k):
        """Append one snapshot per stage (backward) and tighten the value tables."""
        c = self.config
        S, A = c.num_states, self.num_actions
        Hv = c.value_bound
        for h in range(c.H - 1, -1, -1):
            st = self.stages[h]
            mu = self.transition_estimate(h)
            w_up = st.theta + mu @ self.v_bar(h + 1)
            w_lo = st.theta + mu @ self.v_under(h + 1)
            inv = st.prec.inverse.copy()
            bonus = self.beta * np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", self._flat, inv, self._flat), 0.0))
            q_hat = (self._flat @ w_up + bonus).reshape(S, A)
            q_check = (self._flat @ w_lo - bonus).reshape(S, A)
            self.Q_upper[h] = np.clip(np.minimum(q_hat, self.Q_upper[h]), 0.0, Hv)
            self.Q_lower[h] = np.clip(np.maximum(q_check, self.Q_lower[h]), 0.0, Hv)
            st.upper.append(ValueSnapshot(k, w_up, w_lo, self.beta, inv))
            st.lower.append(st.upper[-1])
        for st in self.stages:
            st.ref_log_det = st.prec.log_det
        self.state.k_last = k
        self.state.triggers += 1
        self.state.trigger_episodes.append(k)

    def maybe_update_values(self, k):
        if self.needs_update():
            self.rebuild_values(k)
            return True
        return False

    # learning
    def _solve(self, reg, start, metric):
        c = self.config
        rep = reg.solve(start=start, metric=metric, tol=agent_tolerance(c.d, c.lam, c.solver_tol),
                        max_iters=self.config.solver_max_iters)
        if not rep.converged:
            self.state.solver_warnings += 1
            warnings.warn(f"episode {self.state.k}: estimator solve did not converge", RuntimeWarning,
                          stacklevel=3)
        return rep.solution

    def record_step(self, h, k, s, a, r, s_next, trigger=False):
        st = self.stages[h]
        phi, phit = self.phi[s, a], self.phi_tilde[s, a]
        n, nt = self.norms(h, s, a)
        sigma = self.sigma_hk(h, s, a)
        w, wt = n / sigma, nt / sigma
        tau = self.tau0 * math.sqrt(1 + w * w) / w if w > 0 else math.inf
        taut = self.tilde_tau0 * math.sqrt(1 + wt * wt) / wt if wt > 0 else math.inf
        st.accum[:, s_next] += phi / sigma ** 2
        st.reward.add(phi, r, sigma, tau)
        st.second.add(phit, r * r, sigma, taut)
        st.prec.rank_one_update(phi, sigma)
        st.prec_tilde.rank_one_update(phit, sigma)
        st.theta = self._solve(st.reward, st.theta, st.prec.matrix)
        st.psi = self._solve(st.second, st.psi, st.prec_tilde.matrix)
        st.weights.append(w)
        st.weights_tilde.append(wt)
        return StepRecord(k, h, s, a, float(r), int(s_next), sigma, max(n, nt), w, wt, tau, taut, trigger)

    def run_episode(self, env, k, seed=0, s1=None):
        """Play episode ``k`` on ``env``; returns ``(return, policy, step records)``."""
        c = self.config
        if env.H != c.H:
            raise DomainError("environment horizon does not match the agent")
        self.state.k = k
        trig = self.maybe_update_values(k)
        pol = self.policy()
        r_rng = stream(seed, "mdp_rewards", k)
        p_rng = stream(seed, "mdp_transitions", k)
        s = env.s1 if s1 is None else int(s1)
        total = 0.0
        log = []
        for h in range(c.H):
            a = int(pol[h, s])
            r, s_next = env.step(h, s, a, r_rng, p_rng)
            total += r
            log.append(self.record_step(h, k, s, a, r, s_next, trig and h == 0))
            s = s_next
        return total, pol, log


def config_for_instance(instance, K, **overrides):
    """A :class:`VaraConfig` whose bounds are read off a :class:`LinearMDPInstance`."""
    kw = dict(H=instance.H, K=K, d=instance.d, num_states=instance.num_states,
              coeff_bound=instance.coeff_bound, value_bound=instance.value_bound,
              variance_bound=instance.variance_bound, sigma_R=instance.sigma_R,
              sigma_R2=instance.sigma_R2)
    kw.update(overrides)
    return VaraConfig(**kw)
