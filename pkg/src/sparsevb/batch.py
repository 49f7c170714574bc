"""Batch mean-field variational solvers (SVB-S, SVB-L, SVB-mpL).

All three share the Gaussian weight factors and the Gamma noise-precision
factor; they differ only in how the weight precisions ``alpha`` are refreshed.
The solvers only touch the data through :class:`SufficientStats`, with the
current ``alpha`` kept embedded on the diagonal of ``R``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .stats import (
    Hyperparams,
    SufficientStats,
    clamp_alpha,
    gig_half_moments,
    stats_from_batch,
)

_TINY = 1e-300


class Variant(str, enum.Enum):
    STUDENT_T = "s"
    LAPLACE = "l"
    MULTI_LAPLACE = "mpl"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "s": cls.STUDENT_T, "student": cls.STUDENT_T, "studentt": cls.STUDENT_T,
            "l": cls.LAPLACE, "laplace": cls.LAPLACE,
            "mpl": cls.MULTI_LAPLACE, "multilaplace": cls.MULTI_LAPLACE,
            "multiparamlaplace": cls.MULTI_LAPLACE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown variant {value!r}; expected one of s, l, mpl") from None

    @property
    def label(self) -> str:
        return {"s": "S", "l": "L", "mpl": "mpL"}[self.value]


@dataclass
class PosteriorState:
    """Variational posterior parameters.

    ``gamma`` and ``b_scalar``/``b_vec`` are only populated for the Laplace
    variants (``b_scalar`` for SVB-L, ``b_vec`` for SVB-mpL).
    """

    mu: np.ndarray
    sigma2: np.ndarray
    beta: float
    alpha: np.ndarray
    variant: Variant
    gamma: Optional[np.ndarray] = None
    b_scalar: Optional[float] = None
    b_vec: Optional[np.ndarray] = None
    converged: bool = False
    cycles: int = 0

    @classmethod
    def initial(cls, n_taps: int, variant) -> "PosteriorState":
        variant = Variant.parse(variant)
        state = cls(np.zeros(n_taps), np.zeros(n_taps), 1.0, np.ones(n_taps), variant)
        if variant is Variant.LAPLACE:
            state.gamma = np.full(n_taps, 2.0)
            state.b_scalar = 1.0
        elif variant is Variant.MULTI_LAPLACE:
            state.gamma = np.full(n_taps, 2.0)
            state.b_vec = np.ones(n_taps)
        return state

    @property
    def w2(self) -> np.ndarray:
        """Second moments ``<w_i^2> = mu_i^2 + sigma_i^2``."""
        return self.mu ** 2 + self.sigma2


def update_weight(i: int, state: PosteriorState, stats: SufficientStats) -> tuple[float, float]:
    """Posterior mean and variance of weight ``i`` given the freshest other means."""
    R = stats.R
    r_ii = R[i, i]
    if not r_ii > 0:
        raise FloatingPointError(f"non-positive diagonal r[{i},{i}] = {r_ii!r}")
    s = stats.z[i] - R[i] @ state.mu + r_ii * state.mu[i]
    return float(s / r_ii), float(1.0 / (state.beta * r_ii))


def update_beta(state: PosteriorState, stats: SufficientStats, hyper: Hyperparams) -> float:
    """Noise precision from the residual expanded through ``(d, z, R)``.

    The quadratic ``mu^T R mu`` already contains ``sum mu_i^2 alpha_i`` and
    ``sigma^T r`` contains both the data and prior variance terms.
    """
    mu = state.mu
    N = mu.shape[0]
    denom = (2.0 * hyper.delta + stats.d - 2.0 * stats.z @ mu + mu @ stats.R @ mu
             + state.sigma2 @ np.diagonal(stats.R))
    if not denom > 0:
        raise FloatingPointError(f"non-positive noise precision denominator {denom!r}")
    return float((stats.n + N + 2.0 * hyper.rho) / denom)


def update_alpha_student(state: PosteriorState, hyper: Hyperparams) -> np.ndarray:
    return clamp_alpha((2.0 * hyper.c + 1.0) / (hyper.a + state.beta * state.w2))


def update_alpha_laplace(state: PosteriorState, hyper: Hyperparams, shared: bool):
    """Laplace-route refresh: returns ``(alpha, gamma, b)``.

    ``b`` is a float when ``shared`` (SVB-L) and a per-weight array otherwise.
    """
    N = state.mu.shape[0]
    p = np.maximum(state.beta * state.w2, _TINY)
    if shared:
        b_old = np.full(N, float(state.b_scalar))
    else:
        b_old = np.asarray(state.b_vec, dtype=float)
    alpha = np.empty(N)
    for i in range(N):
        alpha[i], _ = gig_half_moments(float(p[i]), float(b_old[i]))
    alpha = clamp_alpha(alpha)
    gamma = 1.0 / alpha + 1.0 / b_old
    if shared:
        b = (N + hyper.kappa) / (hyper.nu + 0.5 * gamma.sum())
    else:
        b = (1.0 + hyper.kappa) / (hyper.nu + 0.5 * gamma)
    return alpha, gamma, b


def _refresh_alpha(state: PosteriorState, stats: SufficientStats, hyper: Hyperparams) -> None:
    if state.variant is Variant.STUDENT_T:
        alpha = update_alpha_student(state, hyper)
    else:
        shared = state.variant is Variant.LAPLACE
        alpha, state.gamma, b = update_alpha_laplace(state, hyper, shared)
        if shared:
            state.b_scalar = float(b)
        else:
            state.b_vec = b
    stats.R[np.diag_indices(alpha.shape[0])] += alpha - state.alpha
    state.alpha = alpha


def run_cycle(state: PosteriorState, stats: SufficientStats, hyper: Hyperparams) -> float:
    """One sweep: weights in index order, then beta, then alpha (and b).

    Mutates ``state`` and the diagonal of ``stats.R``; returns ``max |delta mu|``.
    """
    change = 0.0
    for i in range(state.mu.shape[0]):
        mu_i, s2_i = update_weight(i, state, stats)
        change = max(change, abs(mu_i - state.mu[i]))
        state.mu[i] = mu_i
        state.sigma2[i] = s2_i
    state.beta = update_beta(state, stats, hyper)
    _refresh_alpha(state, stats, hyper)
    return change


def solve(X, y, lam: float = 1.0, hyper: Optional[Hyperparams] = None, variant="s",
          tol: float = 1e-8, max_cycles: int = 500) -> PosteriorState:
    """Cycle the coordinate updates on ``(X, y)`` to a fixed point.

    Stops when no posterior mean moves more than ``tol`` in a full cycle or
    after ``max_cycles``; non-convergence is reported through
    ``state.converged`` rather than raised.
    """
    hyper = hyper or Hyperparams(lam=lam)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    state = PosteriorState.initial(X.shape[1], variant)
    stats = stats_from_batch(X, y, lam, state.alpha)
    for cycle in range(1, max_cycles + 1):
        change = run_cycle(state, stats, hyper)
        state.cycles = cycle
        if change <= tol:
            state.converged = True
            break
    return state
