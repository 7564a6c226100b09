"""Variance-aware robust online learning under heavy-tailed rewards.

Two agents live here: :class:`~adavara.adaoful.AdaOFUL` for stochastic linear
bandits and :class:`~adavara.vara.VARA` for episodic linear MDPs, together with
the synthetic environments, exact oracles and comparator agents used to check
them.
"""

from adavara.robust_loss import (
    RobustLossParams,
    curvature_weight,
    pseudo_huber,
    pseudo_huber_deriv,
)
from adavara.precision import PrecisionState
from adavara.solver import BallObjective, SolveReport, minimize_on_ball

__version__ = "0.1.0"

__all__ = [
    "RobustLossParams",
    "pseudo_huber",
    "pseudo_huber_deriv",
    "curvature_weight",
    "PrecisionState",
    "BallObjective",
    "SolveReport",
    "minimize_on_ball",
]
