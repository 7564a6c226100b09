"""Comparator agents: weighted least-squares OFUL and reward-truncation OFUL.

Both reuse AdaOFUL's surrogate scales, confidence radius and arm selection;
only the estimator differs.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adavara.adaoful import AdaOFUL, RoundRecord
from adavara.errors import DomainError
from adavara.solver import project_ball


class WlsOFUL(AdaOFUL):
    """OFUL with the closed-form weighted ridge estimate, clipped to the ball."""

    name = "wls"

    def __init__(self, config):
        super().__init__(config)
        self._moment = np.zeros(config.dim)

    def weight_and_tau(self, phi, sigma):
        w, _ = super().weight_and_tau(phi, sigma)
        return w, math.inf

    def _target(self, y):
        return y

    def observe(self, phi, y, nu):
        phi = np.asarray(phi, dtype=float)
        st = self.state
        sigma = self.surrogate_sigma(phi, nu)
        w, tau = self.weight_and_tau(phi, sigma)
        y_used = self._target(float(y))
        st.precision.rank_one_update(phi, sigma)
        self._moment += phi * (y_used / sigma ** 2)
        st.theta = project_ball(st.precision.inverse @ self._moment, self.config.coeff_bound)
        st.t += 1
        st.beta = self.radius(st.t)
        rec = RoundRecord(phi, float(y), float(nu), sigma, tau, w)
        st.history.append(rec)
        return rec


@dataclass
class TruncationConfig:
    """Clipping schedule ``b_t = c_trunc * (nu_max + 1) * t**0.25``.

    With ``nu_max=None`` the running maximum of the observed noise levels is used.
    """

    c_trunc: float = 1.0
    nu_max: Optional[float] = None

    def __post_init__(self):
        if not self.c_trunc > 0:
            raise DomainError("c_trunc must be positive")
        if self.nu_max is not None and not self.nu_max >= 0:
            raise DomainError("nu_max must be nonnegative")

    def threshold(self, t, nu_max):
        return self.c_trunc * (nu_max + 1.0) * t ** 0.25


class TruncatedOFUL(WlsOFUL):
    """WLS OFUL fed with rewards clipped to ``[-b_t, b_t]``."""

    name = "truncated"

    def __init__(self, config, trunc=None):
        super().__init__(config)
        self.trunc = trunc or TruncationConfig()
        self._nu_seen = 0.0

    def threshold(self, t=None):
        t = self.state.t + 1 if t is None else t
        nu_max = self.trunc.nu_max if self.trunc.nu_max is not None else self._nu_seen
        return self.trunc.threshold(t, nu_max)

    def observe(self, phi, y, nu):
        self._nu_seen = max(self._nu_seen, float(nu))
        return super().observe(phi, y, nu)

    def _target(self, y):
        b = self.threshold()
        return min(max(y, -b), b)


def wls_observe(agent, phi, y, nu):
    agent.observe(phi, y, nu)
    return agent.state


def truncated_observe(agent, phi, y, nu):
    agent.observe(phi, y, nu)
    return agent.state
