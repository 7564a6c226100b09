"""Finite linear MDP instances with exact dynamic-programming oracles.

Rewards follow a latent-component model: at ``(h, s, a)`` a component ``j``
is drawn from the probability vector ``phi(s, a)`` and the reward is drawn
from component ``j``'s law, independently of the next state. Mean and second
moment are then linear in ``phi`` with coefficients ``theta_star[h]`` and
``psi_star[h]``. The tabular embedding is the one-hot special case.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adavara.bandit_env import pareto_moments
from adavara.errors import DomainError
from adavara.rng import stream

DETERMINISTIC = "deterministic"
BOUNDED_UNIFORM = "bounded_uniform"
STUDENT_T3 = "student_t3"
PARETO_25 = "pareto_2.5"
REWARD_FAMILIES = (DETERMINISTIC, BOUNDED_UNIFORM, STUDENT_T3, PARETO_25)


def _component_moments(family, mean, sd):
    """Second and fourth raw moments of one reward component (noise sd ``sd``)."""
    m2 = mean ** 2 + sd ** 2
    if family == DETERMINISTIC:
        return mean ** 2, mean ** 4
    if family == BOUNDED_UNIFORM:
        c = math.sqrt(3.0) * sd
        return m2, mean ** 4 + 2.0 * mean ** 2 * c ** 2 + c ** 4 / 5.0
    return m2, math.inf


@dataclass(frozen=True)
class LinearMDPInstance:
    """Episodic linear MDP.

    Shapes: ``phi``, ``phi_tilde`` are ``(S, A, d)``; ``mu_star`` is
    ``(H, d, S)``; ``theta_star``, ``psi_star``, ``noise_sd`` are ``(H, d)``.
    """

    H: int
    num_states: int
    num_actions: int
    phi: np.ndarray
    phi_tilde: np.ndarray
    mu_star: np.ndarray
    theta_star: np.ndarray
    psi_star: np.ndarray
    noise_sd: np.ndarray
    fourth_moment: np.ndarray
    reward_family: str = BOUNDED_UNIFORM
    value_bound: float = 1.0
    s1: int = 0
    seed: int = 0

    @property
    def d(self):
        return self.phi.shape[-1]

    @property
    def transitions(self):
        """``P[h, s, a, s']``."""
        return np.einsum("xad,hdy->hxay", self.phi, self.mu_star)

    @property
    def reward_mean(self):
        return np.einsum("xad,hd->hxa", self.phi, self.theta_star)

    @property
    def reward_second_moment(self):
        return np.einsum("xad,hd->hxa", self.phi_tilde, self.psi_star)

    @property
    def reward_variance(self):
        return self.reward_second_moment - self.reward_mean ** 2

    @property
    def coeff_bound(self):
        """``W``: the largest norm among the reward and second-moment coefficients."""
        return float(max(np.linalg.norm(self.theta_star, axis=1).max(),
                         np.linalg.norm(self.psi_star, axis=1).max()))

    @property
    def sigma_R(self):
        return float(math.sqrt(max(self.reward_variance.max(), 0.0)))

    @property
    def sigma_R2(self):
        """Largest standard deviation of the squared reward (``inf`` for heavy tails)."""
        m4 = np.einsum("xad,hd->hxa", self.phi_tilde, self.fourth_moment)
        v = m4 - self.reward_second_moment ** 2
        return float(math.sqrt(max(v.max(), 0.0))) if np.all(np.isfinite(v)) else math.inf

    @property
    def variance_bound(self):
        """``H * (sigma_R^2 + value_bound^2 / 4)``, an upper bound on any policy's return variance."""
        return self.H * (self.sigma_R ** 2 + self.value_bound ** 2 / 4.0)

    def sample_reward(self, h, s, a, rng):
        p = self.phi[s, a]
        j = int(np.argmax(p)) if p.max() == 1.0 else int(rng.choice(p.size, p=p))
        return self._component_draw(self.theta_star[h, j], self.noise_sd[h, j], rng)

    def _component_draw(self, mean, sd, rng, size=None):
        f = self.reward_family
        if f == DETERMINISTIC or np.all(sd == 0):
            return mean + np.zeros(size) if size is not None else float(mean)
        if f == BOUNDED_UNIFORM:
            noise = math.sqrt(3.0) * rng.uniform(-1.0, 1.0, size)
        elif f == STUDENT_T3:
            noise = rng.standard_t(3.0, size) / math.sqrt(3.0)
        else:
            pm, psd = pareto_moments(2.5)
            sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
            noise = sign * ((1.0 + rng.pareto(2.5, size)) - pm) / psd
        out = mean + sd * noise
        return float(out) if size is None else out

    def sample_next(self, h, s, a, rng):
        p = self.transitions_at(h, s, a)
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), p.size - 1))

    def transitions_at(self, h, s, a):
        p = self.phi[s, a] @ self.mu_star[h]
        return np.clip(p, 0.0, None)

    def step(self, h, s, a, reward_rng, transition_rng):
        return self.sample_reward(h, s, a, reward_rng), self.sample_next(h, s, a, transition_rng)


def _validate_sizes(*sizes):
    for n in sizes:
        if int(n) != n or n < 1:
            raise DomainError("sizes must be positive integers")


def _component_tables(H, d, family, value_bound, reward_scale, rng):
    mean = rng.uniform(0.0, value_bound / H, size=(H, d))
    sd = np.zeros((H, d)) if family == DETERMINISTIC else reward_scale * rng.uniform(0.5, 1.0, size=(H, d))
    m2 = np.empty((H, d))
    m4 = np.empty((H, d))
    for idx in np.ndindex(H, d):
        m2[idx], m4[idx] = _component_moments(family, mean[idx], sd[idx])
    return mean, sd, m2, m4


def _build(H, S, A, phi, family, seed, value_bound, reward_scale, s1, rng):
    if family not in REWARD_FAMILIES:
        raise DomainError(f"unknown reward family {family!r}")
    d = phi.shape[-1]
    mu = rng.dirichlet(np.ones(S), size=(H, d))
    mean, sd, m2, m4 = _component_tables(H, d, family, value_bound, reward_scale, rng)
    for arr in (phi, mu, mean, m2, m4, sd):
        arr.setflags(write=False)
    return LinearMDPInstance(H, S, A, phi, phi, mu, mean, m2, sd, m4, family, value_bound, s1, seed)


def make_tabular_instance(num_states, num_actions, H, reward_family=BOUNDED_UNIFORM, seed=0,
                          value_bound=1.0, reward_scale=0.1, s1=0):
    """Tabular instance embedded with the canonical basis (``d = S * A``)."""
    _validate_sizes(num_states, num_actions, H)
    S, A = int(num_states), int(num_actions)
    phi = np.eye(S * A).reshape(S, A, S * A)
    return _build(H, S, A, phi, reward_family, seed, value_bound, reward_scale, s1,
                  stream(seed, "mdp_instance"))


def make_rank_reduced_instance(num_states, num_actions, H, d, reward_family=BOUNDED_UNIFORM, seed=0,
                               value_bound=1.0, reward_scale=0.1, s1=0, concentration=0.3):
    """Instance whose features are rows of a random row-stochastic ``(S*A) x d`` factor."""
    _validate_sizes(num_states, num_actions, H, d)
    S, A = int(num_states), int(num_actions)
    rng = stream(seed, "mdp_instance")
    phi = rng.dirichlet(np.full(d, concentration), size=S * A).reshape(S, A, d)
    return _build(H, S, A, phi, reward_family, seed, value_bound, reward_scale, s1, rng)


@dataclass
class ExactSolution:
    Q: np.ndarray
    V: np.ndarray
    policy: np.ndarray
    var_R: np.ndarray
    var_V: np.ndarray
    Q_pi: Optional[np.ndarray] = None
    V_pi: Optional[np.ndarray] = None
    var_V_pi: Optional[np.ndarray] = None


def _backward(P, r, policy=None):
    H, S, A, _ = P.shape
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Q[h] = r[h] + P[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1) if policy is None else Q[h][np.arange(S), policy[h]]
    return Q, V


def _value_variance(P, V):
    nxt = V[1:]
    first = np.einsum("hxay,hy->hxa", P, nxt)
    second = np.einsum("hxay,hy->hxa", P, nxt ** 2)
    return np.maximum(second - first ** 2, 0.0)


def solve_exact(instance, policy=None):
    """Optimal values by backward induction; also evaluates ``policy`` (shape ``(H, S)``) if given."""
    P = instance.transitions
    r = instance.reward_mean
    Q, V = _backward(P, r)
    greedy = Q.argmax(axis=2)
    sol = ExactSolution(Q, V, greedy, instance.reward_variance, _value_variance(P, V))
    if policy is not None:
        policy = np.asarray(policy, dtype=np.int64)
        if policy.shape != (instance.H, instance.num_states):
            raise DomainError("policy must have shape (H, S)")
        sol.Q_pi, sol.V_pi = _backward(P, r, policy)
        sol.var_V_pi = _value_variance(P, sol.V_pi)
    return sol


def _start_distribution(instance, s1):
    if np.ndim(s1) == 0:
        dist = np.zeros(instance.num_states)
        dist[int(s1)] = 1.0
        return dist
    dist = np.asarray(s1, dtype=float)
    if dist.shape != (instance.num_states,) or abs(dist.sum() - 1.0) > 1e-12:
        raise DomainError("start distribution must be a probability vector over states")
    return dist


def occupancy(instance, policy, s1=None):
    """``d[h, s, a]``: probability of being at ``(s, a)`` at stage ``h`` under ``policy``."""
    policy = np.asarray(policy, dtype=np.int64)
    P = instance.transitions
    H, S, A = instance.H, instance.num_states, instance.num_actions
    occ = np.zeros((H, S, A))
    state = _start_distribution(instance, instance.s1 if s1 is None else s1)
    for h in range(H):
        occ[h, np.arange(S), policy[h]] = state
        state = np.einsum("xa,xay->y", occ[h], P[h])
    return occ


def g_star(instance, policies, starts=None, exact=None):
    """Occupancy-averaged reward-plus-value variance, capped at the variance bound."""
    if len(policies) == 0:
        raise DomainError("need at least one executed policy")
    if starts is None:
        starts = [instance.s1] * len(policies)
    if len(starts) != len(policies):
        raise DomainError("policies and starts must align")
    exact = exact or solve_exact(instance)
    avg = sum(occupancy(instance, p, s) for p, s in zip(policies, starts)) / len(policies)
    total = float(np.sum(avg * (exact.var_R + exact.var_V)))
    return min(total, instance.variance_bound)


def return_variance(instance, policy, s1=None):
    """Exact variance of the episode return via the law of total variance."""
    sol = solve_exact(instance, policy)
    occ = occupancy(instance, policy, s1)
    return float(np.sum(occ * (sol.var_R + sol.var_V_pi)))


def regret_oracle(instance, episode_values, starts=None, exact=None):
    """Cumulative regret given each episode's exact ``V_1^{pi_k}(s_{1,k})``."""
    v = np.asarray(episode_values, dtype=float)
    exact = exact or solve_exact(instance)
    s = np.full(v.size, instance.s1, dtype=np.int64) if starts is None else np.asarray(starts, dtype=np.int64)
    gaps = np.maximum(exact.V[0][s] - v, 0.0)
    return np.cumsum(gaps)


def rollout_returns(instance, policy, n, seed=0, s1=None):
    """Monte-Carlo episode returns of ``policy`` (vectorised over ``n`` episodes)."""
    rng = stream(seed, "rollout")
    policy = np.asarray(policy, dtype=np.int64)
    P = instance.transitions
    cdf = np.cumsum(P, axis=3)
    H, S = instance.H, instance.num_states
    s = np.full(n, instance.s1 if s1 is None else s1, dtype=np.int64)
    total = np.zeros(n)
    for h in range(H):
        a = policy[h, s]
        feats = instance.phi[s, a]
        if np.all(feats.max(axis=1) == 1.0):
            j = feats.argmax(axis=1)
        else:
            j = (rng.random(n)[:, None] > np.cumsum(feats, axis=1)).sum(axis=1)
            j = np.minimum(j, instance.d - 1)
        total += instance._component_draw(instance.theta_star[h, j], instance.noise_sd[h, j], rng, size=n)
        u = rng.random(n)
        s = np.minimum((u[:, None] > cdf[h, s, a]).sum(axis=1), S - 1)
    return total
