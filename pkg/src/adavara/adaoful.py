"""AdaOFUL: optimistic linear bandit with adaptive pseudo-Huber regression.

Each round the agent scores arms by the ellipsoid upper confidence bound
``<phi, theta> + beta * ||phi||_{H^{-1}}``, observes ``(y, nu)``, sets the
surrogate scale ``sigma``, importance weight ``w`` and robustification
parameter ``tau`` for the new sample, re-solves the ball-constrained robust
regression and grows the precision matrix by ``phi phi^T / sigma^2``.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from adavara.errors import DomainError
from adavara.precision import RECONDITION_EVERY, PrecisionState
from adavara.regression import RobustRegression

THEORY = "theory"
SCALED = "scaled"
AUTO = "auto"


def log_term(horizon, delta):
    """``log(2 T^2 / delta)``, the union-bound factor used throughout."""
    return math.log(2.0 * horizon ** 2 / delta)


def kappa_value(dim, horizon, feature_bound, lam, sigma_min):
    return dim * math.log1p(horizon * feature_bound ** 2 / (dim * lam * sigma_min ** 2))


AGENT_TOL_FACTOR = 1e-6


def agent_tolerance(dim, lam, tol=None):
    """Gradient-mapping tolerance for per-round estimator solves (near-exact minimizer)."""
    return AGENT_TOL_FACTOR * math.sqrt(dim) * lam if tol is None else tol


def auto_tau0(kappa, dim, log_factor):
    return max(math.sqrt(2.0 * kappa), 2.0 * math.sqrt(dim)) / math.sqrt(log_factor)


@dataclass
class AdaOfulConfig:
    """Hyper-parameters of :class:`AdaOFUL`.

    ``lam`` defaults to ``d / B**2`` and ``sigma_min`` to ``1/sqrt(T)``.
    ``c0_override`` and ``c1_override`` replace the weight-cap constants
    (experimental knobs; leave unset for the guaranteed behaviour).
    ``tau0='auto'`` picks the value that balances the bias and range terms of
    the confidence radius. In ``'scaled'`` radius mode every non-ridge term of
    the radius is multiplied by ``radius_scale``.
    """

    dim: int
    horizon: int
    coeff_bound: float = 1.0
    feature_bound: float = 1.0
    delta: float = 0.05
    lam: Optional[float] = None
    tau0: Union[float, str] = AUTO
    sigma_min: Optional[float] = None
    radius_mode: str = THEORY
    radius_scale: float = 0.1
    c0_override: Optional[float] = None
    c1_override: Optional[float] = None
    solver_tol: Optional[float] = None
    solver_max_iters: int = 5_000
    recondition_every: int = RECONDITION_EVERY

    def __post_init__(self):
        if self.dim < 1 or int(self.dim) != self.dim:
            raise DomainError("dim must be a positive integer")
        if self.horizon < 1 or int(self.horizon) != self.horizon:
            raise DomainError("horizon must be a positive integer")
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        for name in ("coeff_bound", "feature_bound"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.lam is None:
            self.lam = self.dim / self.coeff_bound ** 2
        if self.sigma_min is None:
            self.sigma_min = 1.0 / math.sqrt(self.horizon)
        if not (self.lam > 0 and self.sigma_min > 0):
            raise DomainError("lam and sigma_min must be positive")
        if self.radius_mode not in (THEORY, SCALED):
            raise DomainError(f"radius_mode must be 'theory' or 'scaled', got {self.radius_mode!r}")
        if not self.radius_scale > 0:
            raise DomainError("radius_scale must be positive")
        for name in ("c0_override", "c1_override"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")
        if isinstance(self.tau0, str):
            if self.tau0 != AUTO:
                raise DomainError(f"tau0 must be a positive number or 'auto', got {self.tau0!r}")
        elif not self.tau0 > 0:
            raise DomainError("tau0 must be positive")

    @property
    def log_factor(self):
        return log_term(self.horizon, self.delta)

    @property
    def c0(self):
        if self.c0_override is not None:
            return float(self.c0_override)
        return 1.0 / (6.0 * math.sqrt(3.0 * self.log_factor))

    @property
    def c1(self):
        if self.c1_override is not None:
            return float(self.c1_override)
        return 1.0 / (42.0 * self.log_factor)

    @property
    def kappa(self):
        return kappa_value(self.dim, self.horizon, self.feature_bound, self.lam, self.sigma_min)

    @property
    def tau0_value(self):
        if self.tau0 == AUTO:
            return auto_tau0(self.kappa, self.dim, self.log_factor)
        return float(self.tau0)


def kappa(config):
    return config.kappa


def radius(config, t):
    """Confidence radius after ``t`` rounds.

    ``sqrt(lam)*B`` at ``t = 0``; afterwards
    ``32*(kappa/tau0 + sqrt(kappa*log(2t^2/delta)) + tau0*log(2t^2/delta)) + 5*sqrt(lam)*B``.
    """
    ridge = math.sqrt(config.lam) * config.coeff_bound
    if t == 0:
        return ridge
    k = config.kappa
    tau0 = config.tau0_value
    lg = log_term(t, config.delta)
    main = 32.0 * (k / tau0 + math.sqrt(k * lg) + tau0 * lg)
    if config.radius_mode == SCALED:
        main *= config.radius_scale
    return main + 5.0 * ridge


@dataclass
class RoundRecord:
    phi: np.ndarray
    y: float
    nu: float
    sigma: float
    tau: float
    w: float


@dataclass
class AdaOfulState:
    t: int
    precision: PrecisionState
    theta: np.ndarray
    beta: float
    history: list = field(default_factory=list)
    solver_warnings: int = 0


class AdaOFUL:
    """Stateful AdaOFUL agent. One instance plays one bandit run."""

    name = "adaoful"

    def __init__(self, config: AdaOfulConfig):
        self.config = config
        c = config
        self.state = AdaOfulState(
            t=0,
            precision=PrecisionState(c.dim, c.lam, c.recondition_every),
            theta=np.zeros(c.dim),
            beta=radius(c, 0),
        )
        self.regression = RobustRegression(c.dim, c.lam, c.coeff_bound)
        self._tau0 = c.tau0_value
        self._c0 = c.c0
        self._sigma4 = math.sqrt(c.feature_bound * c.coeff_bound) / (c.c1 * c.dim) ** 0.25
        self.last_solve = None

    # shortcuts used by the harness and tests
    @property
    def theta(self):
        return self.state.theta

    @property
    def beta(self):
        return self.state.beta

    @property
    def precision(self):
        return self.state.precision

    @property
    def t(self):
        return self.state.t

    def surrogate_sigma(self, phi, nu):
        """``max{nu, sigma_min, x/c0, sqrt(LB) sqrt(x) / (c1 d)^(1/4)}``, ``x = ||phi||_{H^-1}``."""
        x = self.state.precision.weighted_norm_inv(phi)
        return max(float(nu), self.config.sigma_min, x / self._c0, self._sigma4 * math.sqrt(x))

    def weight_and_tau(self, phi, sigma):
        """Importance weight ``w`` and robustification parameter ``tau`` for a new sample."""
        w = self.state.precision.weighted_norm_inv(phi) / sigma
        if w == 0.0:
            return 0.0, math.inf
        return w, self._tau0 * math.sqrt(1.0 + w * w) / w

    def radius(self, t=None):
        return radius(self.config, self.state.t if t is None else t)

    def scores(self, arms):
        arms = np.asarray(arms, dtype=float)
        return arms @ self.state.theta + self.state.beta * self.state.precision.weighted_norms_inv(arms)

    def select_arm(self, decision_set):
        """Index and feature vector of the most optimistic arm (lowest index on ties)."""
        arms = np.asarray(decision_set, dtype=float)
        if arms.ndim != 2 or arms.shape[0] == 0:
            raise DomainError("decision set must be a non-empty (m, d) array")
        i = int(np.argmax(self.scores(arms)))
        return i, arms[i]

    def _solve(self):
        return self.regression.solve(
            start=self.state.theta,
            metric=self.state.precision.matrix,
            tol=agent_tolerance(self.config.dim, self.config.lam, self.config.solver_tol),
            max_iters=self.config.solver_max_iters,
        )

    def observe(self, phi, y, nu):
        """Incorporate the reward of the arm just played; returns the round record."""
        phi = np.asarray(phi, dtype=float)
        st = self.state
        sigma = self.surrogate_sigma(phi, nu)
        w, tau = self.weight_and_tau(phi, sigma)
        self.regression.add(phi, y, sigma, tau)
        st.precision.rank_one_update(phi, sigma)
        rep = self._solve()
        self.last_solve = rep
        if not rep.converged:
            st.solver_warnings += 1
            warnings.warn(f"round {st.t + 1}: estimator solve did not converge "
                          f"(gradient mapping {rep.final_gradient_mapping_norm:.3g})",
                          RuntimeWarning, stacklevel=2)
        st.theta = rep.solution
        st.t += 1
        st.beta = radius(self.config, st.t)
        rec = RoundRecord(phi, float(y), float(nu), sigma, tau, w)
        st.history.append(rec)
        return rec

    def confidence_contains(self, theta_star):
        """Whether ``theta_star`` lies in the current confidence set."""
        theta_star = np.asarray(theta_star, dtype=float)
        if np.linalg.norm(theta_star) > self.config.coeff_bound * (1 + 1e-12):
            return False
        dist = self.state.precision.weighted_norm(self.state.theta - theta_star)
        return dist <= self.state.beta * (1 + 1e-12)
