"""Fast numerical oracles run by ``sparsevb selftest``.

Each check compares a production code path against an independent
evaluation (batch definitions, quadrature, direct linear solves).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .adaptive import AdaptiveState, gauss_seidel_sweep, update_beta_adaptive
from .stats import (
    Hyperparams,
    SufficientStats,
    gig_half_moments,
    laplace_marginal_density,
    stats_from_batch,
    stats_update,
)


@dataclass
class OracleResult:
    name: str
    passed: bool
    error: float
    tol: float


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def check_recursion_vs_batch(update=None, n: int = 200, N: int = 8,
                             lam: float = 0.99, seed: int = 0, tol: float = 1e-10) -> OracleResult:
    """Chain ``update`` over random samples with random precisions and compare to the batch build.

    The batch statistics embed ``A(n-1)``, the last precisions handed to the recursion.
    ``update`` defaults to :func:`stats_update`.
    """
    update = update or stats_update
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, N))
    y = rng.standard_normal(n)
    alphas = rng.uniform(0.1, 10.0, size=(n + 1, N))
    stats = SufficientStats(np.diag(alphas[0]), np.zeros(N), 0.0, 0)
    for k in range(n):
        # precisions entering at sample k+1: alpha(k) in, alpha(k-1) out
        stats = update(stats, X[k], y[k], lam, alphas[k + 1], alphas[k])
    ref = stats_from_batch(X, y, lam, alphas[n])
    err = max(_rel(stats.R, ref.R), _rel(stats.z, ref.z), _rel(stats.d, ref.d))
    return OracleResult("recursion vs batch statistics", err <= tol, err, tol)


def gig_density(alpha, p: float, q: float):
    """Normalized GIG(p, q, -1/2) density via the closed-form K_{1/2}."""
    x = math.sqrt(p * q)
    k_half = math.sqrt(math.pi / 2.0) * x ** -0.5 * math.exp(-x)
    norm = (p / q) ** -0.25 / (2.0 * k_half)
    return norm * alpha ** -1.5 * np.exp(-0.5 * (p * alpha + q / alpha))


def gig_moments_quadrature(p: float, q: float):
    mode = math.sqrt(q / p)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    pieces = [(0.0, mode), (mode, math.inf)]
    mass = sum(integrate.quad(lambda a: gig_density(a, p, q), lo, hi, **opts)[0]
               for lo, hi in pieces)
    mean = sum(integrate.quad(lambda a: a * gig_density(a, p, q), lo, hi, **opts)[0]
               for lo, hi in pieces)
    inv = sum(integrate.quad(lambda a: gig_density(a, p, q) / a, lo, hi, **opts)[0]
              for lo, hi in pieces)
    return mass, mean, inv


def check_gig_quadrature(p: float = 0.3, q: float = 2.7, tol: float = 1e-8) -> OracleResult:
    mass, mean, inv = gig_moments_quadrature(p, q)
    got = gig_half_moments(p, q)
    err = max(abs(mass - 1.0), _rel(got[0], mean), _rel(got[1], inv))
    return OracleResult("GIG(-1/2) moments vs quadrature", err <= tol, err, tol)


def hierarchical_laplace_quadrature(w: float, b: float, beta: float) -> float:
    """Integrate N(w | 0, 1/(beta*alpha)) * IG(alpha | 1, b/2) over alpha."""
    def integrand(alpha):
        gauss = math.sqrt(beta * alpha / (2.0 * math.pi)) * math.exp(-0.5 * beta * w * w * alpha)
        inv_gamma = 0.5 * b * alpha ** -2.0 * math.exp(-0.5 * b / alpha)
        return gauss * inv_gamma

    scale = b if w == 0 else math.sqrt(b / (beta * w * w))
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    return (integrate.quad(integrand, 0.0, scale, **opts)[0]
            + integrate.quad(integrand, scale, math.inf, **opts)[0])


def check_laplace_marginal(points: int = 10, seed: int = 1, tol: float = 1e-6) -> OracleResult:
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(points):
        w = float(rng.uniform(-3.0, 3.0))
        b = float(rng.uniform(0.2, 5.0))
        beta = float(rng.uniform(0.2, 5.0))
        err = max(err, _rel(laplace_marginal_density([w], b, beta),
                            hierarchical_laplace_quadrature(w, b, beta)))
    return OracleResult("Laplace marginal vs hierarchical quadrature", err <= tol, err, tol)


def check_gauss_seidel(N: int = 16, seed: int = 2, tol: float = 1e-8) -> OracleResult:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((4 * N, N))
    R = X.T @ X + np.diag(rng.uniform(0.5, 2.0, N))
    z = rng.standard_normal(N)
    w = np.zeros(N)
    for _ in range(500):
        gauss_seidel_sweep(R, z, w)
    err = _rel(w, np.linalg.solve(R, z))
    return OracleResult("Gauss-Seidel sweeps vs direct solve", err <= tol, err, tol)


def exact_beta(stats: SufficientStats, w, sigma2, lam: float, N: int,
               rho: float, delta: float) -> float:
    """Noise precision including the quadratic form ``w^T R w``."""
    r = np.diagonal(stats.R)
    den = 2 * delta + stats.d - 2 * stats.z @ w + w @ stats.R @ w + sigma2 @ r
    return (1.0 / (1.0 - lam) + N + 2 * rho) / den


def check_beta_shortcut(N: int = 2, seed: int = 3, tol: float = 1e-12) -> OracleResult:
    """At ``w = R^{-1} z`` the cheap noise precision equals the exact expression."""
    rng = np.random.default_rng(seed)
    lam = 0.99
    X = rng.standard_normal((300, N))
    y = X @ rng.standard_normal(N) + 0.5 * rng.standard_normal(300)
    alpha = rng.uniform(0.1, 1.0, N)
    stats = stats_from_batch(X, y, lam, alpha)
    state = AdaptiveState.initial(N, "s", Hyperparams(lam=lam))
    state.w_hat = np.linalg.solve(stats.R, stats.z)
    state.sigma2 = rng.uniform(1e-3, 1e-2, N)
    got = update_beta_adaptive(state, stats)
    ref = exact_beta(stats, state.w_hat, state.sigma2, lam, N, state.hyper.rho,
                     state.hyper.delta)
    err = _rel(got, ref)
    return OracleResult("noise precision shortcut vs exact form", err <= tol, err, tol)


def run_all() -> list[OracleResult]:
    return [
        check_recursion_vs_batch(),
        check_gig_quadrature(),
        check_laplace_marginal(),
        check_gauss_seidel(),
        check_beta_shortcut(),
    ]
