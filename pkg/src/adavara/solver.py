"""Accelerated projected gradient on a Euclidean ball.

The robust estimators minimize a strongly convex, smooth objective over
``{x : ||x|| <= B}``. This module runs Nesterov/FISTA momentum with
function-value restarts. When the caller knows an SPD matrix ``M`` that
dominates the Hessian everywhere (for pseudo-Huber regression the precision
matrix does), it can be passed as ``metric``; steps are then taken in the
``M`` geometry, which removes the dependence on the spread of ``M``'s spectrum.

Termination is always judged by the Euclidean gradient mapping
``(x - P(x - g/smoothness)) * smoothness`` at the current iterate.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from adavara.errors import DomainError


@dataclass
class BallObjective:
    """A smooth strongly convex objective restricted to a ball.

    ``value_and_grad(x)`` must return ``(f(x), grad f(x))``.
    ``smoothness`` bounds the largest Hessian eigenvalue and
    ``strong_convexity`` the smallest. ``metric``, when given, must satisfy
    ``hess f(x) <= metric`` for every ``x`` in the ball.
    """

    dim: int
    radius: float
    value_and_grad: Callable[[np.ndarray], tuple]
    strong_convexity: float
    smoothness: float
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dim must be positive")
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        if not 0 < self.strong_convexity <= self.smoothness * (1 + 1e-12):
            raise DomainError("need 0 < strong_convexity <= smoothness")


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_gradient_mapping_norm: float
    converged: bool
    value: float = float("nan")
    evaluations: int = 0


def project_ball(y, radius):
    """Euclidean projection onto ``{x : ||x|| <= radius}``."""
    n = float(np.linalg.norm(y))
    # a projected point may overshoot by an ulp; treating that as inside keeps
    # the projection idempotent
    if n <= radius * (1.0 + 4.0 * np.finfo(float).eps):
        return y
    return y * (radius / n)


def default_tolerance(obj):
    """Gradient-mapping tolerance matching an ``O(sqrt(d))`` accuracy target."""
    return np.sqrt(obj.dim) * obj.strong_convexity / 10.0


def gradient_mapping(x, grad, radius, smoothness):
    return (x - project_ball(x - grad / smoothness, radius)) * smoothness


class _MetricProjector:
    """``argmin_{||x||<=B} (x - z)^T M (x - z)`` via the eigenbasis of ``M``."""

    def __init__(self, metric, radius):
        lam, q = np.linalg.eigh(metric)
        if lam[0] <= 0:
            raise DomainError("metric must be positive definite")
        self.lam = lam
        self.q = q
        self.inv = (q / lam) @ q.T
        self.radius = radius

    def step(self, y, grad):
        z = y - self.inv @ grad
        if float(z @ z) <= self.radius ** 2:
            return z
        zh = self.q.T @ z
        a = (self.lam * zh) ** 2
        r2 = self.radius ** 2

        def excess(mu):
            return float(np.sum(a / (self.lam + mu) ** 2)) - r2

        hi = np.sqrt(float(a.sum())) / self.radius
        mu = brentq(excess, 0.0, hi, xtol=1e-14 * max(hi, 1.0), rtol=1e-14)
        x = self.q @ (self.lam * zh / (self.lam + mu))
        # the root is bracketed from the feasible side only up to xtol
        return project_ball(x, self.radius)


def minimize_on_ball(obj, start, tol=None, max_iters=10_000):
    """Minimize ``obj`` over its ball, starting from ``start``.

    Returns a :class:`SolveReport`. If ``max_iters`` runs out the best iterate
    seen is returned with ``converged=False``.
    """
    if tol is None:
        tol = default_tolerance(obj)
    if not tol > 0:
        raise DomainError("tol must be positive")
    B = obj.radius
    L = obj.smoothness
    vg = obj.value_and_grad
    nevals = 0

    def evaluate(x):
        nonlocal nevals
        nevals += 1
        f, g = vg(x)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise FloatingPointError("objective returned a non-finite value or gradient")
        return float(f), np.asarray(g, dtype=float)

    if obj.metric is not None:
        proj = _MetricProjector(obj.metric, B)
        step = proj.step
    else:
        def step(y, g):
            return project_ball(y - g / L, B)

    x = project_ball(np.asarray(start, dtype=float).copy(), B)
    fx, gx = evaluate(x)
    gm = float(np.linalg.norm(gradient_mapping(x, gx, B, L)))
    if gm <= tol:
        return SolveReport(x, 0, gm, True, fx, nevals)

    x_prev = x
    y, gy = x, gx
    t = 1.0
    it = 0
    while it < max_iters:
        it += 1
        x_new = step(y, gy)
        f_new, g_new = evaluate(x_new)
        if f_new > fx and t > 1.0:
            # function-value restart: drop momentum and step from x instead
            t = 1.0
            y, gy = x, gx
            continue
        x_prev, x, fx, gx = x, x_new, f_new, g_new
        gm = float(np.linalg.norm(gradient_mapping(x, gx, B, L)))
        if gm <= tol:
            return SolveReport(x, it, gm, True, fx, nevals)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        t = t_new
        if beta == 0.0:
            y, gy = x, gx
        else:
            y = x + beta * (x - x_prev)
            _, gy = evaluate(y)
    return SolveReport(x, it, gm, False, fx, nevals)
