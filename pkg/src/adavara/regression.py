"""Ball-constrained adaptive pseudo-Huber regression with per-sample scales.

The objective is::

    L(theta) = lam/2 ||theta||^2 + sum_s loss_{tau_s}((y_s - <phi_s, theta>) / sigma_s)

Samples are stored pre-scaled (``phi_s / sigma_s`` and ``y_s / sigma_s``) in
arrays that grow geometrically, so appending is amortized O(d).
"""

import numpy as np

from adavara.robust_loss import curvature_terms, loss_terms
from adavara.solver import BallObjective, minimize_on_ball


class RobustRegression:
    def __init__(self, dim, lam, radius, capacity=64):
        self.dim = dim
        self.lam = float(lam)
        self.radius = float(radius)
        self.n = 0
        self._x = np.empty((capacity, dim))
        self._y = np.empty(capacity)
        self._inv_tau = np.empty(capacity)
        self._inv_sigma2 = np.empty(capacity)

    def _grow(self):
        cap = 2 * self._x.shape[0]
        for name in ("_x", "_y", "_inv_tau", "_inv_sigma2"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add(self, phi, y, sigma, tau):
        """Append one observation; ``tau=inf`` gives it a squared loss."""
        if self.n == self._x.shape[0]:
            self._grow()
        i = self.n
        self._x[i] = np.asarray(phi, dtype=float) / sigma
        self._y[i] = y / sigma
        self._inv_tau[i] = 0.0 if np.isinf(tau) else 1.0 / tau
        self._inv_sigma2[i] = 1.0 / sigma ** 2
        self.n += 1

    @property
    def features(self):
        """Scaled features ``phi_s / sigma_s`` as an ``(n, d)`` view."""
        return self._x[: self.n]

    @property
    def targets(self):
        return self._y[: self.n]

    @property
    def inv_tau(self):
        return self._inv_tau[: self.n]

    def residuals(self, theta):
        return self.targets - self.features @ theta

    def value_and_grad(self, theta):
        x = self._x[: self.n]
        z = self._y[: self.n] - x @ theta
        loss, dl = loss_terms(z, self._inv_tau[: self.n])
        value = 0.5 * self.lam * float(theta @ theta) + float(loss.sum())
        grad = self.lam * theta - dl @ x
        return value, grad

    def hessian(self, theta):
        x = self.features
        c = curvature_terms(self.residuals(theta), self.inv_tau)
        return self.lam * np.eye(self.dim) + (x * c[:, None]).T @ x

    def gram(self):
        """``lam*I + sum_s phi_s phi_s^T / sigma_s^2``; dominates every Hessian."""
        x = self.features
        return self.lam * np.eye(self.dim) + x.T @ x

    def weighted_ridge(self):
        """Closed-form unconstrained weighted ridge solution (the ``tau -> inf`` limit)."""
        return np.linalg.solve(self.gram(), self.features.T @ self.targets)

    def objective(self, metric=None, smoothness=None):
        if metric is None:
            metric = self.gram()
        if smoothness is None:
            smoothness = float(np.linalg.eigvalsh(metric)[-1])
        return BallObjective(
            dim=self.dim,
            radius=self.radius,
            value_and_grad=self.value_and_grad,
            strong_convexity=self.lam,
            smoothness=max(smoothness, self.lam),
            metric=metric,
        )

    def solve(self, start=None, metric=None, tol=None, max_iters=10_000):
        """Minimize over the ball, warm-started at ``start``.

        ``metric`` defaults to the weighted Gram matrix, an exact Hessian upper
        bound; callers that maintain it incrementally should pass it in.
        """
        if start is None:
            start = np.zeros(self.dim)
        return minimize_on_ball(self.objective(metric), start, tol=tol, max_iters=max_iters)
