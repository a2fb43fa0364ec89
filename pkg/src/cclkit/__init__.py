"""Convex-concave loss workbench: losses, small-MLP training, a shadow-model
membership-inference attack suite, and numeric verification of the theory."""

from .losses import ConcaveTerm, ConvexBase, LossSpec, Objective
from .numerics import DistStats, dist_stats, rng_stream, softmax, std_normal_cdf
from .theory import GaussianLossModel, membership_advantage, p1_score

__all__ = [
    "ConcaveTerm",
    "ConvexBase",
    "LossSpec",
    "Objective",
    "DistStats",
    "dist_stats",
    "rng_stream",
    "softmax",
    "std_normal_cdf",
    "GaussianLossModel",
    "membership_advantage",
    "p1_score",
]

__version__ = "0.1.0"
