"""Sparse Rayleigh fading channels and channel inputs for the benchmarks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

JAKES_OSCILLATORS = 16
BUTTER_ORDER = 5
BUTTER_CUTOFF = 0.5  # fraction of Nyquist, i.e. a quarter of the sampling rate
_BURN_IN = 256


@dataclass
class ChannelTrajectory:
    """True weights ``W[n, :]`` for one packet plus support bookkeeping."""

    W: np.ndarray
    support: np.ndarray
    added_tap: Optional[int] = None
    event_time: Optional[int] = None

    @property
    def packet_len(self) -> int:
        return self.W.shape[0]

    @property
    def n_taps(self) -> int:
        return self.W.shape[1]


def jakes_process(n: int, doppler: float, rng: np.random.Generator,
                  oscillators: int = JAKES_OSCILLATORS) -> np.ndarray:
    """Real sum-of-sinusoids fading process with unit ensemble power.

    Arrival angles and phases are uniform, which gives the autocorrelation
    ``J0(2*pi*doppler*lag)`` in expectation.
    """
    theta = rng.uniform(0.0, 2.0 * np.pi, oscillators)
    phi = rng.uniform(0.0, 2.0 * np.pi, oscillators)
    k = np.arange(n)[:, None]
    arg = 2.0 * np.pi * doppler * k * np.cos(theta)[None, :] + phi[None, :]
    return math.sqrt(2.0 / oscillators) * np.cos(arg).sum(axis=1)


def gen_channel(config, rng: np.random.Generator) -> ChannelTrajectory:
    """Draw a support of ``xi`` taps and a fading trajectory for each.

    With a tracking event ``(t0, tap)`` configured, one off-support tap (the
    given one, or a random one when ``tap`` is None) switches on at ``t0``.
    """
    N, xi, n = config.N, config.xi, config.packet_len
    if not 0 < xi <= N:
        raise ValueError(f"need 0 < xi <= N, got xi={xi}, N={N}")
    support = np.sort(rng.choice(N, size=xi, replace=False))
    W = np.zeros((n, N))
    for tap in support:
        W[:, tap] = jakes_process(n, config.doppler, rng)
    traj = ChannelTrajectory(W, support)
    if config.tracking_event is not None:
        t0, tap = config.tracking_event
        off = np.setdiff1d(np.arange(N), support)
        if tap is None:
            tap = int(rng.choice(off))
        elif tap in support:
            raise ValueError(f"tracking tap {tap} is already in the support")
        W[t0:, tap] = jakes_process(n - t0, config.doppler, rng)
        traj.added_tap, traj.event_time = int(tap), int(t0)
    return traj


def butterworth_coefficients():
    return signal.butter(BUTTER_ORDER, BUTTER_CUTOFF)


def _unit_power_gain(b, a) -> float:
    impulse = np.zeros(4096)
    impulse[0] = 1.0
    h = signal.lfilter(b, a, impulse)
    return float(np.sqrt(h @ h))


def gen_input(config, rng: np.random.Generator, n: int) -> np.ndarray:
    """Scalar channel input of length ``n`` with unit average power.

    ``bpsk`` gives i.i.d. +-1 symbols; ``butterworth_colored`` gives white
    Gaussian noise through a 5th-order lowpass Butterworth (cut-off at a
    quarter of the sampling rate), rescaled to unit power.
    """
    kind = config.input_kind
    if kind == "bpsk":
        return rng.choice(np.array([-1.0, 1.0]), size=n)
    if kind == "butterworth_colored":
        b, a = butterworth_coefficients()
        white = rng.standard_normal(n + _BURN_IN)
        return signal.lfilter(b, a, white)[_BURN_IN:] / _unit_power_gain(b, a)
    raise ValueError(f"unknown input_kind {kind!r}")


def delay_line(u, n_taps: int) -> np.ndarray:
    """Regressor matrix whose row ``k`` is ``[u[k], u[k-1], ..., u[k-N+1]]`` (zeros before start)."""
    u = np.asarray(u, dtype=float)
    X = np.zeros((u.shape[0], n_taps))
    for j in range(n_taps):
        X[j:, j] = u[: u.shape[0] - j]
    return X


def noise_variance(xi: int, snr_db: float) -> float:
    """Noise power for unit-power taps and unit-power input."""
    return xi / 10.0 ** (snr_db / 10.0)
