"""Shape matrix ``lambda*I + sum_s phi_s phi_s^T / sigma_s^2`` under rank-one updates.

The inverse is maintained with the Sherman-Morrison identity and refactorized
from the matrix every ``recondition_every`` updates to bound floating-point
drift. The log-determinant is accumulated through the matrix determinant lemma.
"""

import numpy as np
from scipy import linalg

from adavara.errors import DomainError, NumericalDegeneracyError

RECONDITION_EVERY = 512


class PrecisionState:
    """SPD precision matrix together with its inverse and log-determinant.

    Parameters
    ----------
    dim : int
        Feature dimension ``d``.
    lam : float
        Ridge weight; the matrix starts at ``lam * I``.
    recondition_every : int or None
        Refactorize after this many updates. ``None`` disables it.
    """

    def __init__(self, dim, lam, recondition_every=RECONDITION_EVERY):
        if int(dim) != dim or dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim}")
        if not (lam > 0 and np.isfinite(lam)):
            raise DomainError(f"lambda must be positive and finite, got {lam}")
        self.dim = int(dim)
        self.lam = float(lam)
        self.recondition_every = recondition_every
        self.matrix = self.lam * np.eye(self.dim)
        self.inverse = np.eye(self.dim) / self.lam
        self.log_det = self.dim * np.log(self.lam)
        self.update_count = 0

    @classmethod
    def init(cls, dim, lam, recondition_every=RECONDITION_EVERY):
        return cls(dim, lam, recondition_every)

    def copy(self):
        new = object.__new__(PrecisionState)
        new.dim = self.dim
        new.lam = self.lam
        new.recondition_every = self.recondition_every
        new.matrix = self.matrix.copy()
        new.inverse = self.inverse.copy()
        new.log_det = self.log_det
        new.update_count = self.update_count
        return new

    def rank_one_update(self, phi, sigma):
        """Add ``(phi/sigma)(phi/sigma)^T`` in place and return ``self``."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.dim,):
            raise DomainError(f"phi must have shape ({self.dim},), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise DomainError("phi must be finite")
        if not (sigma > 0 and np.isfinite(sigma)):
            raise DomainError(f"sigma must be positive and finite, got {sigma}")
        self.update_count += 1
        v = phi / sigma
        if not np.any(v):
            return self
        u = self.inverse @ v
        denom = 1.0 + float(v @ u)
        self.matrix += np.outer(v, v)
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        self.inverse -= np.outer(u, u) / denom
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.log_det += np.log(denom)
        if self.recondition_every and self.update_count % self.recondition_every == 0:
            self.recondition()
        return self

    def recondition(self):
        """Recompute inverse and log-determinant from the matrix by Cholesky."""
        try:
            c, lower = linalg.cho_factor(self.matrix, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalDegeneracyError("precision matrix is not SPD") from exc
        self.inverse = linalg.cho_solve((c, lower), np.eye(self.dim))
        self.inverse = 0.5 * (self.inverse + self.inverse.T)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(c))))
        return self

    def weighted_norm_inv(self, x):
        """``sqrt(x^T H^{-1} x)``."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(max(float(x @ self.inverse @ x), 0.0)))

    def weighted_norm(self, x):
        """``sqrt(x^T H x)``."""
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(max(float(x @ self.matrix @ x), 0.0)))

    def weighted_norms_inv(self, rows):
        """Row-wise ``||x||_{H^{-1}}`` for a ``(n, d)`` array."""
        rows = np.asarray(rows, dtype=float)
        q = np.einsum("ij,jk,ik->i", rows, self.inverse, rows)
        return np.sqrt(np.maximum(q, 0.0))

    def solve(self, b):
        """``H^{-1} b`` using the maintained inverse."""
        return self.inverse @ b

    def __repr__(self):
        return (f"PrecisionState(dim={self.dim}, lam={self.lam:g}, "
                f"updates={self.update_count}, log_det={self.log_det:.6g})")


def init(dim, lam, recondition_every=RECONDITION_EVERY):
    return PrecisionState(dim, lam, recondition_every)


def rank_one_update(state, phi, sigma):
    return state.rank_one_update(phi, sigma)


def weighted_norm_inv(state, x):
    return state.weighted_norm_inv(x)


def weighted_norm(state, x):
    return state.weighted_norm(x)


def recondition(state):
    return state.recondition()
