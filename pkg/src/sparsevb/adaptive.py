"""Adaptive sparse variational Bayes filters (ASVB-S, ASVB-L, ASVB-mpL).

Each incoming sample triggers, in order: one statistics update, one noise
precision update, a single Gauss-Seidel sweep over the weights (refreshing
each weight's precision right after the weight itself), and for ASVB-L a
final update of the shared shrinkage ``b``.

The per-sample work lives in numba kernels that mutate the state arrays in
place, so a step allocates nothing once the state exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .batch import Variant
from .stats import ALPHA_CEIL, ALPHA_FLOOR, Hyperparams, SufficientStats, _stats_update_inplace

R0_EPS = 1e-3

_VARIANT_CODE = {Variant.STUDENT_T: 0, Variant.LAPLACE: 1, Variant.MULTI_LAPLACE: 2}
_NO_B = np.empty(0)


class NonFiniteSampleError(ValueError):
    """A sample with NaN/Inf entries was rejected; the filter state is untouched."""


@njit(cache=True, nogil=True)
def _coordinate(R, z, w, i):
    acc = 0.0
    for j in range(w.shape[0]):
        if j != i:
            acc += R[i, j] * w[j]
    return (z[i] - acc) / R[i, i]


@njit(cache=True, nogil=True)
def _sweep(R, z, w):
    for i in range(w.shape[0]):
        w[i] = _coordinate(R, z, w, i)


@njit(cache=True, nogil=True)
def _beta_adaptive(R, z, d, w_prev, sigma2_prev, lam, n, rho, delta, beta_prev):
    N = w_prev.shape[0]
    if lam < 1.0:
        window = 1.0 / (1.0 - lam)
    else:
        window = float(n)
    den = 2.0 * delta + d
    for i in range(N):
        den += R[i, i] * sigma2_prev[i] - z[i] * w_prev[i]
    if den > 0.0 and math.isfinite(den):
        return (window + N + 2.0 * rho) / den, False
    return beta_prev, True


@njit(cache=True, nogil=True)
def _precision(beta, wi, r_ii, b, c, a, variant):
    # <w_i^2> with the fresh mean and the variance 1/(beta r_ii), times beta
    q = beta * wi * wi + 1.0 / r_ii
    if variant == 0:
        al = (2.0 * c + 1.0) / (a + q)
    else:
        al = math.sqrt(b / q)
    if not al >= ALPHA_FLOOR:
        return ALPHA_FLOOR if al < ALPHA_FLOOR else ALPHA_CEIL
    return min(al, ALPHA_CEIL)


@njit(cache=True, nogil=True)
def _asvb_step(R, z, d, w, sigma2, alpha_cur, alpha_prev, alpha_new, gamma, b_vec,
               beta, b, n, x, y, lam, rho, delta, c, a, kappa, nu, variant):
    N = w.shape[0]
    d = _stats_update_inplace(R, z, d, x, y, lam, alpha_cur, alpha_prev)
    for i in range(N):
        # cancellation against a huge alpha(n-2) can leave a tiny negative diagonal
        if not R[i, i] >= ALPHA_FLOOR:
            R[i, i] = ALPHA_FLOOR
    beta, held = _beta_adaptive(R, z, d, w, sigma2, lam, n, rho, delta, beta)
    gsum = 0.0
    for i in range(N):
        r_ii = R[i, i]
        sigma2[i] = 1.0 / (beta * r_ii)
        wi = _coordinate(R, z, w, i)
        w[i] = wi
        if variant == 2:
            al = _precision(beta, wi, r_ii, b_vec[i], c, a, variant)
        else:
            al = _precision(beta, wi, r_ii, b, c, a, variant)
        alpha_new[i] = al
        if variant == 1:
            gamma[i] = 1.0 / al + 1.0 / b
            gsum += gamma[i]
        elif variant == 2:
            gamma[i] = 1.0 / al + 1.0 / b_vec[i]
            b_vec[i] = (1.0 + kappa) / (nu + 0.5 * gamma[i])
    if variant == 1:
        b = (N + kappa) / (nu + 0.5 * gsum)
    for i in range(N):
        alpha_prev[i] = alpha_cur[i]
        alpha_cur[i] = alpha_new[i]
    return d, beta, b, held


@njit(cache=True, nogil=True)
def _asvb_run(R, z, d, w, sigma2, alpha_cur, alpha_prev, alpha_new, gamma, b_vec,
              beta, b, n, X, Y, lam, rho, delta, c, a, kappa, nu, variant,
              W_out, inv_beta_out):
    held_count = 0
    rejected = 0
    for k in range(X.shape[0]):
        x = X[k]
        y = Y[k]
        ok = math.isfinite(y)
        for j in range(x.shape[0]):
            ok = ok and math.isfinite(x[j])
        if ok:
            n += 1
            d, beta, b, held = _asvb_step(R, z, d, w, sigma2, alpha_cur, alpha_prev,
                                          alpha_new, gamma, b_vec, beta, b, n, x, y,
                                          lam, rho, delta, c, a, kappa, nu, variant)
            if held:
                held_count += 1
        else:
            rejected += 1
        W_out[k, :] = w
        inv_beta_out[k] = 1.0 / beta
    return d, beta, b, n, held_count, rejected


@dataclass
class AdaptiveState:
    """Complete state of one ASVB stream.

    ``alpha_curr`` is alpha(n-1) and ``alpha_prev`` is alpha(n-2) from the
    point of view of the next sample; both are needed to swap the regularizer
    embedded in ``stats.R``.
    """

    stats: SufficientStats
    w_hat: np.ndarray
    sigma2: np.ndarray
    beta: float
    alpha_curr: np.ndarray
    alpha_prev: np.ndarray
    variant: Variant
    hyper: Hyperparams
    gamma: Optional[np.ndarray] = None
    b_scalar: Optional[float] = None
    b_vec: Optional[np.ndarray] = None
    beta_held: int = 0
    rejected: int = 0
    _alpha_new: np.ndarray = field(default=None, repr=False)

    @classmethod
    def initial(cls, n_taps: int, variant="mpl", hyper: Optional[Hyperparams] = None,
                eps: float = R0_EPS) -> "AdaptiveState":
        """Zero weights, unit precisions, ``beta = b = 1``.

        ``R(0)`` holds ``eps*I`` of data-like regularization plus the
        embedded ``A(-1) = I`` that the first update subtracts again.
        """
        variant = Variant.parse(variant)
        hyper = hyper or Hyperparams(lam=0.99)
        alpha = np.ones(n_taps)
        stats = SufficientStats((eps + 1.0) * np.eye(n_taps), np.zeros(n_taps), 0.0, 0)
        state = cls(stats, np.zeros(n_taps), np.zeros(n_taps), 1.0, alpha.copy(),
                    alpha.copy(), variant, hyper, _alpha_new=np.empty(n_taps))
        state.gamma = np.zeros(n_taps)
        if variant is Variant.LAPLACE:
            state.b_scalar = 1.0
        elif variant is Variant.MULTI_LAPLACE:
            state.b_vec = np.ones(n_taps)
        return state

    @property
    def n_taps(self) -> int:
        return self.w_hat.shape[0]

    @property
    def noise_var(self) -> float:
        return 1.0 / self.beta

    def _kernel_args(self):
        b_vec = self.b_vec if self.b_vec is not None else _NO_B
        b = self.b_scalar if self.b_scalar is not None else 1.0
        return (self.stats.R, self.stats.z, float(self.stats.d), self.w_hat, self.sigma2,
                self.alpha_curr, self.alpha_prev, self._alpha_new, self.gamma, b_vec,
                float(self.beta), float(b))

    def _hyper_args(self):
        h = self.hyper
        return (float(h.lam), float(h.rho), float(h.delta), float(h.c), float(h.a),
                float(h.kappa), float(h.nu), _VARIANT_CODE[self.variant])


def step(state: AdaptiveState, x, y: float) -> AdaptiveState:
    """Consume one sample ``(x, y)``; mutates and returns ``state``."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    y = float(y)
    if x.shape[0] != state.n_taps:
        raise ValueError(f"expected {state.n_taps} regressors, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and math.isfinite(y)):
        state.rejected += 1
        raise NonFiniteSampleError("non-finite regressor or observation; sample rejected")
    state.stats.n += 1
    R, z, d, w, s2, a_cur, a_prev, a_new, gamma, b_vec, beta, b = state._kernel_args()
    d, beta, b, held = _asvb_step(R, z, d, w, s2, a_cur, a_prev, a_new, gamma, b_vec,
                                  beta, b, state.stats.n, x, y, *state._hyper_args())
    _store_scalars(state, d, beta, b)
    state.beta_held += int(held)
    return state


def run(state: AdaptiveState, X, y):
    """Stream a block of samples through the filter.

    Returns ``(W_hat, noise_var)``: the weight estimate and ``1/beta`` after
    every sample.  Non-finite samples are skipped and counted in
    ``state.rejected``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != state.n_taps or X.shape[0] != y.shape[0]:
        raise ValueError(f"expected X of shape (n, {state.n_taps}) matching y")
    W_out = np.empty_like(X)
    inv_beta = np.empty(X.shape[0])
    R, z, d, w, s2, a_cur, a_prev, a_new, gamma, b_vec, beta, b = state._kernel_args()
    d, beta, b, n, held, rejected = _asvb_run(
        R, z, d, w, s2, a_cur, a_prev, a_new, gamma, b_vec, beta, b, state.stats.n,
        X, y, *state._hyper_args(), W_out, inv_beta)
    _store_scalars(state, d, beta, b)
    state.stats.n = n
    state.beta_held += held
    state.rejected += rejected
    return W_out, inv_beta


def _store_scalars(state: AdaptiveState, d, beta, b) -> None:
    state.stats.d = float(d)
    state.beta = float(beta)
    if state.variant is Variant.LAPLACE:
        state.b_scalar = float(b)


def update_beta_adaptive(state: AdaptiveState, stats: SufficientStats) -> float:
    """Noise precision at time n from ``stats`` (time n) and the state's time n-1 moments.

    A non-positive denominator (possible during start-up) returns the
    previous ``beta`` unchanged.
    """
    beta, _ = _beta_adaptive(stats.R, stats.z, float(stats.d), state.w_hat, state.sigma2,
                             float(state.hyper.lam), stats.n, float(state.hyper.rho),
                             float(state.hyper.delta), float(state.beta))
    return float(beta)


def coordinate_update(i: int, state: AdaptiveState) -> float:
    """New value of weight ``i`` using the freshest values of all other weights."""
    return float(_coordinate(state.stats.R, state.stats.z, state.w_hat, int(i)))


def precision_update(variant, beta: float, w_i: float, r_ii: float, b: float = 1.0,
                     hyper: Optional[Hyperparams] = None) -> tuple[float, Optional[float]]:
    """Per-coordinate precision refresh used inside the sweep.

    Returns ``(alpha_i, gamma_i)``; ``gamma_i = 1/alpha_i + 1/b`` for the
    Laplace variants and None for ASVB-S.  ``b`` is the shrinkage of the
    previous step (shared for ASVB-L, per weight for ASVB-mpL).
    """
    variant = Variant.parse(variant)
    h = hyper or Hyperparams()
    al = float(_precision(float(beta), float(w_i), float(r_ii), float(b), float(h.c),
                          float(h.a), _VARIANT_CODE[variant]))
    if variant is Variant.STUDENT_T:
        return al, None
    return al, 1.0 / al + 1.0 / b


def gauss_seidel_sweep(R, z, w) -> np.ndarray:
    """One in-place forward Gauss-Seidel sweep on ``R w = z``; returns ``w``."""
    _sweep(np.ascontiguousarray(R, dtype=float), np.ascontiguousarray(z, dtype=float), w)
    return w


class ASVB:
    """Streaming wrapper holding one :class:`AdaptiveState`."""

    def __init__(self, n_taps: int, variant="mpl", lam: float = 0.99,
                 hyper: Optional[Hyperparams] = None):
        if hyper is None:
            hyper = Hyperparams(lam=lam)
        self.state = AdaptiveState.initial(n_taps, variant, hyper)

    @property
    def w_hat(self) -> np.ndarray:
        return self.state.w_hat

    @property
    def noise_var(self) -> float:
        return self.state.noise_var

    def update(self, x, y) -> None:
        step(self.state, x, y)

    def process(self, X, y):
        return run(self.state, X, y)
