"""Exponentially weighted sufficient statistics and prior moment helpers.

Every second-order estimator in the package works from the triple

    R(n) = X^T L X + diag(alpha(n-1)),   z(n) = X^T L y,   d(n) = y^T L y

with ``L = diag(lam**(n-1), ..., 1)``.  ``R`` carries the (delayed) prior
precisions on its diagonal, so swapping the regularizer from one sample to
the next needs both the previous and the one-before-previous precisions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

ALPHA_FLOOR = 1e-10
ALPHA_CEIL = 1e10


class DomainError(ValueError):
    """Raised when a distribution helper receives parameters outside its support."""


@dataclass(frozen=True)
class Hyperparams:
    """Fixed model constants.

    ``rho``/``delta`` parametrize the Gamma prior of the noise precision,
    ``c``/``a`` the Gamma prior of each weight precision (Student-t route),
    ``kappa``/``nu`` the Gamma prior of the Laplace shrinkage ``b`` (or ``b_i``).
    ``lam`` is the forgetting factor.
    """

    rho: float = 1e-6
    delta: float = 1e-6
    c: float = 1e-6
    a: float = 1e-6
    kappa: float = 1e-6
    nu: float = 1e-6
    lam: float = 1.0

    def __post_init__(self):
        for name in ("rho", "delta", "c", "a", "kappa", "nu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lam must lie in (0, 1], got {self.lam!r}")


@dataclass
class SufficientStats:
    """Weighted autocorrelation ``R``, cross-correlation ``z``, energy ``d``, count ``n``."""

    R: np.ndarray
    z: np.ndarray
    d: float = 0.0
    n: int = 0

    @classmethod
    def zeros(cls, n_taps: int) -> "SufficientStats":
        return cls(np.zeros((n_taps, n_taps)), np.zeros(n_taps), 0.0, 0)

    @property
    def n_taps(self) -> int:
        return self.z.shape[0]

    @property
    def r(self) -> np.ndarray:
        """Diagonal of ``R``."""
        return np.diagonal(self.R).copy()

    def copy(self) -> "SufficientStats":
        return replace(self, R=self.R.copy(), z=self.z.copy())


def clamp_alpha(alpha):
    """Clip precisions into ``[ALPHA_FLOOR, ALPHA_CEIL]``; NaN maps to the ceiling."""
    alpha = np.asarray(alpha, dtype=float)
    return np.clip(np.nan_to_num(alpha, nan=ALPHA_CEIL), ALPHA_FLOOR, ALPHA_CEIL)


def stats_from_batch(X, y, lam: float, alpha) -> SufficientStats:
    """Build the statistics of a whole data block directly from their definition.

    Mostly an oracle for :func:`stats_update`; the row ``X[k]`` gets weight
    ``lam**(n-1-k)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    n, N = X.shape
    if n < 1 or y.shape[0] != n or alpha.shape[0] != N:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}, alpha {alpha.shape}")
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"lam must lie in (0, 1], got {lam!r}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    weights = lam ** np.arange(n - 1, -1, -1, dtype=float)
    Xw = X * weights[:, None]
    R = X.T @ Xw
    R = 0.5 * (R + R.T)
    R[np.diag_indices(N)] += alpha
    return SufficientStats(R, Xw.T @ y, float(weights @ (y * y)), n)


@njit(cache=True, nogil=True)
def _stats_update_inplace(R, z, d, x, y, lam, alpha_prev, alpha_prev2):
    # R <- lam R + x x^T - lam diag(alpha_prev2) + diag(alpha_prev); returns new d
    N = x.shape[0]
    for i in range(N):
        xi = x[i]
        for j in range(N):
            R[i, j] = lam * R[i, j] + xi * x[j]
        R[i, i] += alpha_prev[i] - lam * alpha_prev2[i]
        z[i] = lam * z[i] + xi * y
    return lam * d + y * y


def stats_update(stats: SufficientStats, x, y: float, lam: float,
                 alpha_prev, alpha_prev2) -> SufficientStats:
    """Advance the statistics by one sample and return a new object.

    ``stats`` must embed ``diag(alpha_prev2)``; the result embeds
    ``diag(alpha_prev)``.
    """
    x = np.ascontiguousarray(x, dtype=float).ravel()
    alpha_prev = np.ascontiguousarray(alpha_prev, dtype=float).ravel()
    alpha_prev2 = np.ascontiguousarray(alpha_prev2, dtype=float).ravel()
    N = stats.n_taps
    if x.shape[0] != N or alpha_prev.shape[0] != N or alpha_prev2.shape[0] != N:
        raise ValueError("dimension mismatch between stats and sample/precisions")
    out = stats.copy()
    out.d = _stats_update_inplace(out.R, out.z, float(out.d), x, float(y), float(lam),
                                  alpha_prev, alpha_prev2)
    out.n += 1
    return out


def gig_half_moments(p: float, q: float) -> tuple[float, float]:
    """Mean and inverse mean of ``GIG(alpha; p, q, -1/2)``.

    The density is proportional to ``alpha**(-3/2) * exp(-(p*alpha + q/alpha)/2)``;
    its mean is ``sqrt(q/p)`` and ``E[1/alpha] = 1/mean + 1/q``.
    """
    if not (math.isfinite(p) and math.isfinite(q)) or p <= 0 or q <= 0:
        raise DomainError(f"GIG(-1/2) needs p > 0 and q > 0, got p={p!r}, q={q!r}")
    mean = math.sqrt(q / p)
    return mean, 1.0 / mean + 1.0 / q


def laplace_marginal_density(w, b: float, beta: float) -> float:
    """Density of ``w`` with the weight precisions integrated out.

    Returns ``(s/2)**N * exp(-s * ||w||_1)`` with ``s = sqrt(beta*b)``.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not (np.all(np.isfinite(w)) and math.isfinite(b) and math.isfinite(beta)):
        raise DomainError("non-finite input to laplace_marginal_density")
    if b <= 0 or beta <= 0:
        raise DomainError(f"b and beta must be positive, got b={b!r}, beta={beta!r}")
    s = math.sqrt(beta * b)
    N = w.shape[0]
    return float(math.exp(N * math.log(s / 2.0) - s * np.abs(w).sum()))
