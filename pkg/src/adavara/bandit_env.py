"""Synthetic linear bandits with heavy-tailed noise and exact regret accounting."""

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from adavara.errors import DomainError
from adavara.rng import stream

ZERO = "zero"
GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
PARETO_SYMMETRIC = "pareto_symmetric"
FAMILIES = (ZERO, GAUSSIAN, STUDENT_T, PARETO_SYMMETRIC)

FIXED = "fixed"
FRESH_UNIT = "fresh_unit"


def pareto_moments(alpha):
    """Mean and standard deviation of a Pareto(alpha, x_m=1) variable."""
    mean = alpha / (alpha - 1.0)
    var = alpha / ((alpha - 1.0) ** 2 * (alpha - 2.0))
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class NoiseModel:
    """Mean-zero reward noise with an exactly known standard deviation.

    ``shape`` is the degrees of freedom for ``student_t`` and the tail index
    for ``pareto_symmetric``; it is ignored otherwise. The symmetric Pareto
    draw is rescaled so that its standard deviation equals ``scale``.
    """

    family: str = GAUSSIAN
    scale: float = 1.0
    shape: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown noise family {self.family!r}")
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise DomainError("noise scale must be finite and nonnegative")
        if self.family == STUDENT_T:
            if self.shape is None:
                object.__setattr__(self, "shape", 3.0)
            if not self.shape > 2:
                raise DomainError("student_t needs df > 2 for finite variance")
        elif self.family == PARETO_SYMMETRIC:
            if self.shape is None:
                object.__setattr__(self, "shape", 2.5)
            if not self.shape > 2:
                raise DomainError("pareto_symmetric needs shape > 2 for finite variance")

    @property
    def nu(self):
        """Standard deviation of one draw."""
        if self.family == ZERO:
            return 0.0
        if self.family == STUDENT_T:
            return self.scale * math.sqrt(self.shape / (self.shape - 2.0))
        return float(self.scale)

    def sample(self, rng, size=None):
        if self.family == ZERO or self.scale == 0.0:
            return np.zeros(size) if size is not None else 0.0
        if self.family == GAUSSIAN:
            return self.scale * rng.standard_normal(size)
        if self.family == STUDENT_T:
            return self.scale * rng.standard_t(self.shape, size)
        mean, sd = pareto_moments(self.shape)
        p = 1.0 + rng.pareto(self.shape, size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        out = self.scale * sign * (p - mean) / sd
        return float(out) if size is None else out


def unit_sphere(rng, m, d):
    x = rng.standard_normal((m, d))
    n = np.linalg.norm(x, axis=1, keepdims=True)
    n[n == 0.0] = 1.0
    return x / n


@dataclass(frozen=True)
class BanditInstance:
    """A linear bandit. Decision sets are regenerated from ``(seed, t)`` on demand."""

    theta_star: np.ndarray
    noise: NoiseModel = field(default_factory=NoiseModel)
    source: str = FRESH_UNIT
    arms: Optional[np.ndarray] = None
    num_arms: int = 20
    seed: int = 0
    feature_bound: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.ndim != 1:
            raise DomainError("theta_star must be a vector")
        object.__setattr__(self, "theta_star", theta)
        if self.source == FIXED:
            if self.arms is None:
                raise DomainError("fixed decision sets need explicit arms")
            arms = np.array(self.arms, dtype=float)
            if arms.ndim != 2 or arms.shape[1] != theta.size or arms.shape[0] == 0:
                raise DomainError("arms must be a non-empty (m, d) array")
            if np.any(np.linalg.norm(arms, axis=1) > self.feature_bound * (1 + 1e-12)):
                raise DomainError("an arm exceeds the feature bound")
            arms.setflags(write=False)
            object.__setattr__(self, "arms", arms)
        elif self.source == FRESH_UNIT:
            if self.num_arms < 1:
                raise DomainError("num_arms must be positive")
        else:
            raise DomainError(f"unknown decision-set source {self.source!r}")

    @property
    def dim(self):
        return self.theta_star.size

    def decision_set(self, t):
        if t < 1:
            raise DomainError("rounds are numbered from 1")
        if self.source == FIXED:
            return self.arms
        return self.feature_bound * unit_sphere(stream(self.seed, "arms", t), self.num_arms, self.dim)

    def draw_round(self, t):
        """Decision set of round ``t`` and its optimal expected reward."""
        arms = self.decision_set(t)
        return arms, float(np.max(arms @ self.theta_star))

    def pull(self, phi, t):
        """Noisy reward of ``phi`` at round ``t`` and the noise standard deviation."""
        eps = self.noise.sample(stream(self.seed, "noise", t))
        return float(np.dot(phi, self.theta_star) + eps), self.noise.nu


def random_instance(dim, seed, noise=None, num_arms=20, coeff_bound=1.0, feature_bound=1.0):
    """Instance with ``theta_star`` uniform on the sphere of radius ``coeff_bound``."""
    theta = coeff_bound * unit_sphere(stream(seed, "instance"), 1, dim)[0]
    return BanditInstance(theta, noise or NoiseModel(), FRESH_UNIT, None, num_arms, seed, feature_bound)


@dataclass
class RegretTrace:
    t: np.ndarray
    arm_index: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    w: np.ndarray
    beta: np.ndarray
    theta_in_C: np.ndarray
    solver_warnings: int = 0
    runtime: float = 0.0

    COLUMNS = ("t", "arm_index", "inst_regret", "cum_regret", "nu", "sigma", "tau", "w", "beta", "theta_in_C")

    def __len__(self):
        return self.t.size

    @property
    def final_regret(self):
        return float(self.cum_regret[-1]) if len(self) else 0.0

    @property
    def always_covered(self):
        return bool(np.all(self.theta_in_C))

    def potential(self):
        """``sum_t min{1, w_t^2}``."""
        return float(np.sum(np.minimum(1.0, self.w ** 2)))


def run(agent, instance, horizon, coverage=True):
    """Play ``horizon`` rounds of ``agent`` on ``instance``."""
    start = time.perf_counter()
    dim = getattr(getattr(agent, "config", None), "dim", instance.dim)
    if dim != instance.dim:
        raise DomainError(f"agent dimension {dim} does not match instance dimension {instance.dim}")
    n = int(horizon)
    if n < 0:
        raise DomainError("horizon must be nonnegative")
    idx = np.zeros(n, dtype=np.int64)
    inst = np.zeros(n)
    cols = {k: np.zeros(n) for k in ("nu", "sigma", "tau", "w", "beta")}
    inside = np.zeros(n, dtype=np.int8)
    for r in range(n):
        t = r + 1
        arms, best = instance.draw_round(t)
        i, phi = agent.select_arm(arms)
        y, nu = instance.pull(phi, t)
        rec = agent.observe(phi, y, nu)
        idx[r] = i
        inst[r] = max(0.0, best - float(arms[i] @ instance.theta_star))
        cols["nu"][r] = nu
        cols["sigma"][r] = getattr(rec, "sigma", np.nan)
        cols["tau"][r] = getattr(rec, "tau", np.nan)
        cols["w"][r] = getattr(rec, "w", np.nan)
        cols["beta"][r] = getattr(agent, "beta", np.nan)
        if coverage and hasattr(agent, "confidence_contains"):
            inside[r] = agent.confidence_contains(instance.theta_star)
    return RegretTrace(
        t=np.arange(1, n + 1),
        arm_index=idx,
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        theta_in_C=inside,
        solver_warnings=int(getattr(getattr(agent, "state", None), "solver_warnings", 0)),
        runtime=time.perf_counter() - start,
        **cols,
    )
