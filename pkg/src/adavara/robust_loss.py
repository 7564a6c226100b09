"""Pseudo-Huber loss and its first two derivatives.

All three functions accept scalars or numpy arrays (broadcast together) and
return the same shape. ``tau=inf`` is accepted and degrades to the quadratic
loss ``x**2 / 2``; this is how observations whose robustification parameter is
unbounded (zero feature vectors, or the least-squares limit) are handled.
"""

from dataclasses import dataclass

import numpy as np

from adavara.errors import DomainError


@dataclass(frozen=True)
class RobustLossParams:
    """Per-observation robustification parameter and surrogate scale."""

    tau: float
    sigma: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma}")


def _check(x, tau):
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("residual must be finite")
    if np.any(~(tau > 0)):
        raise DomainError("tau must be positive")
    return x, tau


def _radius(x, tau):
    # hypot rescales by max(|x|, tau) internally, so Pareto-sized residuals
    # (|x| ~ 1e8 and beyond) do not overflow.
    return np.hypot(tau, x)


def _unwrap(out):
    return float(out) if np.ndim(out) == 0 else out


def pseudo_huber(x, tau):
    """``tau * (sqrt(tau**2 + x**2) - tau)``.

    Evaluated as ``tau * x * (x / (sqrt(tau**2 + x**2) + tau))`` to avoid the
    cancellation near zero and the overflow of ``x**2``.
    """
    x, tau = _check(x, tau)
    with np.errstate(invalid="ignore", over="ignore"):
        out = tau * x * (x / (_radius(x, tau) + tau))
    with np.errstate(over="ignore"):
        quad = 0.5 * x * x
    out = np.where(np.isinf(tau), quad, out)
    return _unwrap(out)


def pseudo_huber_deriv(x, tau):
    """First derivative, ``tau * x / sqrt(tau**2 + x**2)``; bounded by ``tau``."""
    x, tau = _check(x, tau)
    with np.errstate(invalid="ignore"):
        out = tau * x / _radius(x, tau)
    out = np.where(np.isinf(tau), x, out)
    return _unwrap(out)


def curvature_weight(x, tau):
    """Second derivative, ``(tau / sqrt(tau**2 + x**2))**3``, in ``(0, 1]``."""
    x, tau = _check(x, tau)
    with np.errstate(invalid="ignore"):
        out = (tau / _radius(x, tau)) ** 3
    out = np.where(np.isinf(tau), 1.0, out)
    return _unwrap(out)


def loss_terms(z, inv_tau):
    """Vectorized loss and derivative parameterized by ``1/tau``.

    With ``u = z / tau`` the loss is ``z**2 / (sqrt(1 + u**2) + 1)`` and the
    derivative ``z / sqrt(1 + u**2)``; ``inv_tau = 0`` is the quadratic limit.
    No argument checking: this is the inner loop of the estimators.
    """
    s = np.hypot(1.0, z * inv_tau)
    return z * (z / (s + 1.0)), z / s


def curvature_terms(z, inv_tau):
    """Vectorized ``curvature_weight`` parameterized by ``1/tau``."""
    return np.hypot(1.0, z * inv_tau) ** -3
