"""Monte-Carlo NMSE experiments over fading-channel ensembles.

Every realization draws its own channel, input and noise from a child of
the experiment seed, then streams the same data through every configured
estimator.  Per-realization error sums are merged in realization order, so
results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adaptive import ASVB
from .baselines import RLS, CCDLasso, tau_grid
from .channel import delay_line, gen_channel, gen_input, noise_variance
from .config import EstimatorSpec, ExperimentConfig

NMSE_FLOOR_DB = -300.0


@dataclass
class NmseCurve:
    label: str
    nmse_db: np.ndarray
    digest: str
    noise_var: Optional[np.ndarray] = None


@dataclass
class TapTrace:
    """Added-tap tracking record: ensemble MSE plus one example realization."""

    label: str
    tap_mse: np.ndarray
    true_tap: np.ndarray
    est_tap: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curves: list
    noise_var_true: float
    summary: dict
    tap_traces: list = field(default_factory=list)

    def curve(self, label: str) -> NmseCurve:
        for c in self.curves:
            if c.label == label:
                return c
        raise KeyError(label)


def to_db(ratio):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(ratio)


def nmse(W_hat, W_true) -> np.ndarray:
    """NMSE in dB per time index, ensemble-averaging numerator and denominator separately.

    Accepts ``(n, N)`` for one realization or ``(R, n, N)`` for an ensemble.
    """
    W_hat = np.asarray(W_hat, dtype=float)
    W_true = np.asarray(W_true, dtype=float)
    if W_hat.shape != W_true.shape:
        raise ValueError(f"shape mismatch {W_hat.shape} vs {W_true.shape}")
    if W_true.ndim == 2:
        W_hat, W_true = W_hat[None], W_true[None]
    num = ((W_true - W_hat) ** 2).sum(axis=(0, 2))
    den = (W_true ** 2).sum(axis=(0, 2))
    if np.any(den <= 0):
        raise ValueError("NMSE undefined: true weights vanish at some time index")
    return to_db(num / den)


def steady_state_db(curve_db, fraction: float = 0.2) -> float:
    """Mean of the linear NMSE over the trailing ``fraction`` of the packet, in dB."""
    curve_db = np.asarray(curve_db)
    k = max(1, int(round(fraction * curve_db.shape[0])))
    tail = 10.0 ** (curve_db[-k:] / 10.0)
    return float(to_db(tail.mean()))


def first_crossing(curve_db, level_db: float) -> Optional[int]:
    """First 1-based time index at which the curve is at or below ``level_db``."""
    hits = np.flatnonzero(np.asarray(curve_db) <= level_db)
    return int(hits[0]) + 1 if hits.size else None


def build_estimator(spec: EstimatorSpec, cfg: ExperimentConfig, support, tau=None):
    lam = spec.lam if spec.lam is not None else cfg.lam
    if spec.kind == "rls":
        return RLS(cfg.N, lam)
    if spec.kind == "garls":
        return RLS(cfg.N, lam, support=support)
    if spec.kind == "asvb":
        return ASVB(cfg.N, spec.variant, lam)
    if spec.kind == "ccd_lasso":
        return CCDLasso(cfg.N, lam, spec.tau if tau is None else tau)
    raise ValueError(f"unknown estimator kind {spec.kind!r}")


def draw_realization(cfg: ExperimentConfig, rng: np.random.Generator):
    """Channel trajectory, regressors and noisy observations for one packet.

    The input runs ``N - 1`` samples ahead of the packet so that every
    regressor is a full delay line and the configured SNR holds from the
    first sample on.
    """
    traj = gen_channel(cfg, rng)
    lead = cfg.N - 1
    X = delay_line(gen_input(cfg, rng, cfg.packet_len + lead), cfg.N)[lead:]
    clean = np.einsum("ij,ij->i", X, traj.W)
    sigma2 = noise_variance(cfg.xi, cfg.snr_db)
    y = clean + rng.normal(0.0, math.sqrt(sigma2), cfg.packet_len)
    return traj, X, y


def run_estimator(est, X, y, traj):
    """Stream a packet, splitting at the tracking event so a genie can extend its support."""
    if traj.event_time is None:
        return est.process(X, y)
    t0 = traj.event_time
    W1, nv1 = est.process(X[:t0], y[:t0])
    if hasattr(est, "add_support"):
        est.add_support(traj.added_tap)
    W2, nv2 = est.process(X[t0:], y[t0:])
    nv = None if nv1 is None else np.concatenate([nv1, nv2])
    return np.vstack([W1, W2]), nv


def _realization(cfg: ExperimentConfig, seed: np.random.SeedSequence, taus: dict):
    rng = np.random.default_rng(seed)
    traj, X, y = draw_realization(cfg, rng)
    out = {"den": (traj.W ** 2).sum(axis=1), "est": {}}
    for spec in cfg.estimators:
        est = build_estimator(spec, cfg, traj.support, taus.get(spec.label))
        t_start = time.perf_counter()
        W_hat, nv = run_estimator(est, X, y, traj)
        elapsed = time.perf_counter() - t_start
        bad = ~np.all(np.isfinite(W_hat), axis=1)
        err = ((traj.W - W_hat) ** 2).sum(axis=1)
        err[bad] = np.inf
        rec = {"err": err, "noise_var": nv, "elapsed": elapsed,
               "diverged_at": int(np.argmax(bad)) + 1 if bad.any() else None}
        if traj.added_tap is not None:
            rec["tap_err"] = (traj.W[:, traj.added_tap] - W_hat[:, traj.added_tap]) ** 2
            rec["tap_true"] = traj.W[:, traj.added_tap].copy()
            rec["tap_est"] = W_hat[:, traj.added_tap].copy()
        out["est"][spec.label] = rec
    return out


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cross_validate_tau(cfg: ExperimentConfig, spec: EstimatorSpec, threads: int = 1) -> float:
    """Genie cross-validation: the grid value with the lowest steady-state NMSE on pilot packets.

    Pilot packets use a seed stream disjoint from the main ensemble.
    """
    grid = tau_grid(cfg.N)
    seeds = np.random.SeedSequence([cfg.seed, 1]).spawn(cfg.cv_realizations)

    def pilot(seed):
        rng = np.random.default_rng(seed)
        traj, X, y = draw_realization(cfg, rng)
        lam = spec.lam if spec.lam is not None else cfg.lam
        errs = []
        for tau in grid:
            W_hat, _ = CCDLasso(cfg.N, lam, float(tau)).process(X, y)
            errs.append(((traj.W - W_hat) ** 2).sum(axis=1))
        return np.array(errs), (traj.W ** 2).sum(axis=1)

    num = np.zeros((grid.shape[0], cfg.packet_len))
    den = np.zeros(cfg.packet_len)
    for e, d in _map(pilot, seeds, threads):
        num += e
        den += d
    scores = [steady_state_db(to_db(num[k] / den), cfg.steady_fraction)
              for k in range(grid.shape[0])]
    scores = np.nan_to_num(np.asarray(scores), nan=np.inf)
    return float(grid[int(np.argmin(scores))])


def _finite(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run the full ensemble for one configuration (no sweep)."""
    wall = time.perf_counter()
    taus = {}
    for spec in cfg.estimators:
        if spec.kind == "ccd_lasso":
            taus[spec.label] = (cross_validate_tau(cfg, spec, threads) if spec.tau == "cv"
                                else float(spec.tau))
    seeds = np.random.SeedSequence([cfg.seed, 0]).spawn(cfg.realizations)
    parts = _map(lambda s: _realization(cfg, s, taus), seeds, threads)

    n = cfg.packet_len
    digest = cfg.digest()
    den = np.zeros(n)
    for p in parts:
        den += p["den"]
    sigma2 = noise_variance(cfg.xi, cfg.snr_db)
    curves, traces, per_est = [], [], {}
    for spec in cfg.estimators:
        label = spec.label
        recs = [p["est"][label] for p in parts]
        num = np.zeros(n)
        for r in recs:
            num += r["err"]
        with np.errstate(invalid="ignore"):
            curve_db = np.maximum(to_db(num / den), NMSE_FLOOR_DB)
        nv = None
        if recs[0]["noise_var"] is not None:
            nv = np.zeros(n)
            for r in recs:
                nv += r["noise_var"]
            nv /= len(recs)
        curves.append(NmseCurve(label, curve_db, digest, nv))

        steady = steady_state_db(curve_db, cfg.steady_fraction)
        elapsed = sum(r["elapsed"] for r in recs)
        diverged = [r["diverged_at"] for r in recs if r["diverged_at"] is not None]
        info = {
            "kind": spec.kind,
            "lambda": spec.lam if spec.lam is not None else cfg.lam,
            "steady_state_nmse_db": _finite(steady),
            "convergence_step": (first_crossing(curve_db, steady + 1.0)
                                 if math.isfinite(steady) else None),
            "threshold_db": cfg.threshold_db,
            "time_to_threshold": first_crossing(curve_db, cfg.threshold_db),
            "total_seconds": elapsed,
            "per_step_us": 1e6 * elapsed / (n * len(recs)),
            "diverged_realizations": len(diverged),
            "first_divergence_step": min(diverged) if diverged else None,
        }
        if spec.variant:
            info["variant"] = spec.variant
        if label in taus:
            info["tau"] = taus[label]
        if nv is not None:
            k = max(1, int(round(cfg.steady_fraction * n)))
            info["noise_var_steady"] = _finite(nv[-k:].mean())
            info["noise_var_ratio"] = _finite(nv[-k:].mean() / sigma2)
        if "tap_err" in recs[0]:
            tap_mse = np.mean([r["tap_err"] for r in recs], axis=0)
            traces.append(TapTrace(label, tap_mse, recs[0]["tap_true"], recs[0]["tap_est"]))
            t0 = cfg.tracking_event[0]
            info["added_tap_mse_post_event"] = _finite(tap_mse[t0:].mean())
        per_est[label] = info

    summary = {
        "name": cfg.name,
        "digest": digest,
        "seed": cfg.seed,
        "realizations": cfg.realizations,
        "noise_var_true": sigma2,
        "estimators": per_est,
        "wall_seconds": time.perf_counter() - wall,
    }
    return ExperimentResult(cfg, curves, sigma2, summary, traces)


@dataclass
class SweepResult:
    config: ExperimentConfig
    key: str
    values: list
    steady_db: dict
    summary: dict


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Steady-state NMSE of every estimator as one configuration key is varied."""
    wall = time.perf_counter()
    steady = {spec.label: [] for spec in cfg.estimators}
    points = []
    for v in cfg.sweep_values:
        sub = cfg.replace(**{cfg.sweep_key: v, "sweep_key": None, "sweep_values": None})
        res = run_experiment(sub, threads)
        for label, info in res.summary["estimators"].items():
            steady[label].append(info["steady_state_nmse_db"])
        points.append({cfg.sweep_key: v, "estimators": res.summary["estimators"]})
    summary = {
        "name": cfg.name,
        "digest": cfg.digest(),
        "seed": cfg.seed,
        "realizations": cfg.realizations,
        "sweep_key": cfg.sweep_key,
        "points": points,
        "wall_seconds": time.perf_counter() - wall,
    }
    return SweepResult(cfg, cfg.sweep_key, list(cfg.sweep_values), steady, summary)
