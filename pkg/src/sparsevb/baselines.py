"""Reference adaptive estimators: RLS, genie-aided RLS, and a CCD lasso.

The CCD lasso shares the statistics recursion of the Bayesian filters with
the precisions pinned at zero, and replaces each coordinate solve by a
soft-thresholded one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .adaptive import R0_EPS
from .stats import SufficientStats, _stats_update_inplace

RLS_DELTA = 100.0


@njit(cache=True, nogil=True)
def _rls_step(P, w, x, y, lam, Px):
    k = w.shape[0]
    denom = lam
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += P[i, j] * x[j]
        Px[i] = acc
        denom += x[i] * acc
    err = y
    for i in range(k):
        err -= w[i] * x[i]
    for i in range(k):
        g = Px[i] / denom
        w[i] += g * err
        for j in range(i + 1):
            v = (P[i, j] - g * Px[j]) / lam
            P[i, j] = v
            P[j, i] = v


@njit(cache=True, nogil=True)
def _rls_run(P, w, idx, X, Y, lam, W_out):
    k = idx.shape[0]
    xs = np.empty(k)
    Px = np.empty(k)
    for t in range(X.shape[0]):
        for m in range(k):
            xs[m] = X[t, idx[m]]
        _rls_step(P, w, xs, Y[t], lam, Px)
        W_out[t, :] = 0.0
        for m in range(k):
            W_out[t, idx[m]] = w[m]


@dataclass
class RlsState:
    """Exponentially weighted RLS on the taps listed in ``support``.

    ``P`` and ``w`` cover only the supported taps; unsupported taps are
    reported as exactly zero.
    """

    P: np.ndarray
    w: np.ndarray
    support: np.ndarray
    n_taps: int
    lam: float

    @classmethod
    def initial(cls, n_taps: int, lam: float, support=None, delta: float = RLS_DELTA):
        if support is None:
            support = np.arange(n_taps)
        support = np.unique(np.asarray(support, dtype=np.int64))
        k = support.shape[0]
        return cls(delta * np.eye(k), np.zeros(k), support, n_taps, float(lam))

    @property
    def w_hat(self) -> np.ndarray:
        out = np.zeros(self.n_taps)
        out[self.support] = self.w
        return out

    @property
    def support_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_taps, dtype=bool)
        mask[self.support] = True
        return mask


def rls_step(state: RlsState, x, y: float) -> RlsState:
    """One RLS gain/weight/inverse-correlation update; mutates and returns ``state``."""
    x = np.asarray(x, dtype=float).ravel()
    _rls_step(state.P, state.w, np.ascontiguousarray(x[state.support]), float(y),
              state.lam, np.empty(state.w.shape[0]))
    return state


class RLS:
    """Sparsity-agnostic RLS, or genie-aided RLS when ``support`` is given."""

    def __init__(self, n_taps: int, lam: float = 0.99, support=None, delta: float = RLS_DELTA):
        self.delta = delta
        self.state = RlsState.initial(n_taps, lam, support, delta)

    @property
    def w_hat(self) -> np.ndarray:
        return self.state.w_hat

    def update(self, x, y) -> None:
        rls_step(self.state, x, y)

    def add_support(self, index: int) -> None:
        """Extend the genie support by one tap, started fresh at zero."""
        s = self.state
        if index in s.support:
            return
        support = np.sort(np.append(s.support, index))
        pos = int(np.searchsorted(support, index))
        k = support.shape[0]
        keep = np.delete(np.arange(k), pos)
        P = np.zeros((k, k))
        P[np.ix_(keep, keep)] = s.P
        P[pos, pos] = self.delta
        w = np.zeros(k)
        w[keep] = s.w
        s.P, s.w, s.support = P, w, support

    def process(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        W_out = np.empty_like(X)
        _rls_run(self.state.P, self.state.w, self.state.support, X,
                 np.ascontiguousarray(y, dtype=float), self.state.lam, W_out)
        return W_out, None


@njit(cache=True, nogil=True)
def _soft_coordinate(R, z, w, i, half_tau):
    acc = 0.0
    for j in range(w.shape[0]):
        if j != i:
            acc += R[i, j] * w[j]
    s = z[i] - acc
    if s > half_tau:
        return (s - half_tau) / R[i, i]
    if s < -half_tau:
        return (s + half_tau) / R[i, i]
    return 0.0


@njit(cache=True, nogil=True)
def _ccd_cycle(R, z, w, half_tau):
    for i in range(w.shape[0]):
        w[i] = _soft_coordinate(R, z, w, i, half_tau)


@njit(cache=True, nogil=True)
def _ccd_run(R, z, d, w, zeros, X, Y, lam, half_tau, W_out):
    for t in range(X.shape[0]):
        d = _stats_update_inplace(R, z, d, X[t], Y[t], lam, zeros, zeros)
        _ccd_cycle(R, z, w, half_tau)
        W_out[t, :] = w
    return d


@dataclass
class CcdLassoState:
    """Statistics with zero precisions, current estimate, and l1 weight ``tau``."""

    stats: SufficientStats
    w_hat: np.ndarray
    tau: float
    lam: float

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError(f"tau must be >= 0, got {self.tau!r}")

    @classmethod
    def initial(cls, n_taps: int, lam: float, tau: float, eps: float = R0_EPS):
        stats = SufficientStats(eps * np.eye(n_taps), np.zeros(n_taps), 0.0, 0)
        return cls(stats, np.zeros(n_taps), float(tau), float(lam))


def ccd_lasso_step(state: CcdLassoState, x, y: float) -> CcdLassoState:
    """Update the statistics, then run one soft-thresholded coordinate cycle."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    zeros = np.zeros(x.shape[0])
    st = state.stats
    st.d = _stats_update_inplace(st.R, st.z, float(st.d), x, float(y), state.lam, zeros, zeros)
    st.n += 1
    _ccd_cycle(st.R, st.z, state.w_hat, 0.5 * state.tau)
    return state


def ccd_cycle(R, z, w, tau: float) -> np.ndarray:
    """One in-place soft-thresholded coordinate cycle on frozen ``(R, z)``."""
    _ccd_cycle(np.ascontiguousarray(R, dtype=float), np.ascontiguousarray(z, dtype=float),
               w, 0.5 * float(tau))
    return w


class CCDLasso:
    def __init__(self, n_taps: int, lam: float = 0.99, tau: float = 1.0):
        self.state = CcdLassoState.initial(n_taps, lam, tau)

    @property
    def w_hat(self) -> np.ndarray:
        return self.state.w_hat

    def update(self, x, y) -> None:
        ccd_lasso_step(self.state, x, y)

    def process(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        W_out = np.empty_like(X)
        st = self.state.stats
        st.d = _ccd_run(st.R, st.z, float(st.d), self.state.w_hat, np.zeros(X.shape[1]), X,
                        np.ascontiguousarray(y, dtype=float), self.state.lam,
                        0.5 * self.state.tau, W_out)
        st.n += X.shape[0]
        return W_out, None


def tau_grid(n_taps: int, points: int = 15, lo: float = 1e-4, hi: float = 1e1) -> np.ndarray:
    """Log-spaced candidate l1 weights scaled by ``sqrt(log N)``."""
    return np.logspace(math.log10(lo), math.log10(hi), points) * math.sqrt(math.log(n_taps))
