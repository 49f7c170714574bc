"""Sparse variational Bayes estimators, batch and adaptive, with RLS-family baselines."""
from .adaptive import ASVB, AdaptiveState, NonFiniteSampleError, step
from .baselines import RLS, CCDLasso
from .batch import PosteriorState, Variant, solve
from .stats import Hyperparams, SufficientStats, stats_from_batch, stats_update

__version__ = "0.1.0"

__all__ = [
    "ASVB", "AdaptiveState", "CCDLasso", "Hyperparams", "NonFiniteSampleError",
    "PosteriorState", "RLS", "SufficientStats", "Variant", "solve", "stats_from_batch",
    "stats_update", "step",
]
