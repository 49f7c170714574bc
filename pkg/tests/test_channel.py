"""Fading channels, channel inputs and noise calibration."""
import math

import numpy as np
import pytest
from scipy import signal, special

from sparsevb.channel import (
    butterworth_coefficients,
    delay_line,
    gen_channel,
    gen_input,
    jakes_process,
    noise_variance,
)
from sparsevb.config import ExperimentConfig
from sparsevb.harness import draw_realization


def butterworth_digital_magnitude(f_over_fs, cutoff_over_fs=0.25, order=5):
    """Bilinear-transform Butterworth magnitude with pre-warped cut-off."""
    ratio = np.tan(np.pi * f_over_fs) / np.tan(np.pi * cutoff_over_fs)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))


class TestJakes:
    def test_autocorrelation_matches_bessel(self):
        rng = np.random.default_rng(0)
        fd, lags = 0.01, np.array([0, 5, 10, 20, 40])
        draws = np.array([jakes_process(41, fd, rng) for _ in range(6000)])
        emp = (draws[:, [0]] * draws[:, lags]).mean(axis=0)
        np.testing.assert_allclose(emp, special.j0(2 * np.pi * fd * lags), atol=0.06)

    def test_unit_power(self):
        rng = np.random.default_rng(1)
        p = np.mean([jakes_process(1, 5e-5, rng)[0] ** 2 for _ in range(20000)])
        assert p == pytest.approx(1.0, abs=0.04)

    def test_lag_one_correlation_at_slow_fading(self):
        cfg = ExperimentConfig(packet_len=1000, doppler=5e-5)
        traj = gen_channel(cfg, np.random.default_rng(2))
        oracle = 1 - (2 * np.pi * 5e-5) ** 2 / 4
        assert oracle >= 0.999
        for tap in traj.support:
            w = traj.W[:, tap]
            rho = (w[:-1] @ w[1:]) / math.sqrt((w[:-1] @ w[:-1]) * (w[1:] @ w[1:]))
            assert rho >= 0.999


class TestGenChannel:
    def test_frozen_channel(self):
        cfg = ExperimentConfig(packet_len=300, doppler=0.0)
        traj = gen_channel(cfg, np.random.default_rng(3))
        assert traj.support.shape == (8,) and np.unique(traj.support).shape == (8,)
        np.testing.assert_array_equal(traj.W, np.broadcast_to(traj.W[0], traj.W.shape))
        off = np.setdiff1d(np.arange(64), traj.support)
        assert np.all(traj.W[:, off] == 0)
        assert np.all(traj.W[0, traj.support] != 0)

    def test_tracking_event(self):
        cfg = ExperimentConfig(packet_len=400, tracking_event=(150, None))
        traj = gen_channel(cfg, np.random.default_rng(4))
        tap = traj.added_tap
        assert tap not in traj.support and traj.event_time == 150
        assert np.all(traj.W[:150, tap] == 0) and np.all(traj.W[150:, tap] != 0)

    def test_tracking_event_fixed_tap(self):
        cfg = ExperimentConfig(packet_len=100, xi=1, N=4, tracking_event=(50, 2))
        for seed in range(10):
            rng = np.random.default_rng(seed)
            try:
                traj = gen_channel(cfg, rng)
            except ValueError:
                continue  # tap 2 drawn into the support
            assert traj.added_tap == 2

    def test_xi_larger_than_taps(self):
        with pytest.raises(ValueError):
            gen_channel(ExperimentConfig(N=4, xi=5), np.random.default_rng(0))


class TestInputs:
    def test_bpsk(self):
        u = gen_input(ExperimentConfig(), np.random.default_rng(5), 20000)
        assert set(np.unique(u)) == {-1.0, 1.0}
        assert abs(u.mean()) < 0.03

    def test_colored_unit_power(self):
        cfg = ExperimentConfig(input_kind="butterworth_colored")
        u = gen_input(cfg, np.random.default_rng(6), 200000)
        assert np.mean(u ** 2) == pytest.approx(1.0, abs=0.02)

    def test_design_matches_bilinear_butterworth(self):
        b, a = butterworth_coefficients()
        f = np.linspace(0.001, 0.499, 200)
        _, h = signal.freqz(b, a, worN=2 * np.pi * f)
        np.testing.assert_allclose(np.abs(h), butterworth_digital_magnitude(f),
                                   rtol=1e-8, atol=1e-12)

    def test_stopband_attenuation_of_generated_input(self):
        cfg = ExperimentConfig(input_kind="butterworth_colored")
        u = gen_input(cfg, np.random.default_rng(7), 400000)
        f, pxx = signal.welch(u, nperseg=1024)
        passband = pxx[(f > 0.02) & (f < 0.15)].mean()
        at = pxx[np.argmin(np.abs(f - 0.45))]
        assert 10 * np.log10(passband / at) >= 20
        # the analytic design is far stricter than the requirement there
        assert 20 * np.log10(butterworth_digital_magnitude(0.45)) < -20

    @pytest.mark.xfail(strict=True, reason=(
        "0.45 of the Nyquist rate is 0.225 of the sampling rate, inside the passband of a "
        "filter cut off at 0.25 of the sampling rate; attenuation there is about 1 dB"))
    def test_attenuation_at_fraction_of_nyquist(self):
        assert 20 * np.log10(butterworth_digital_magnitude(0.45 * 0.5)) <= -20

    def test_unknown_kind(self):
        cfg = ExperimentConfig()
        cfg.input_kind = "pink"
        with pytest.raises(ValueError):
            gen_input(cfg, np.random.default_rng(0), 10)


class TestDelayLine:
    def test_shift_structure(self):
        X = delay_line([1.0, 2.0, 3.0, 4.0], 3)
        np.testing.assert_array_equal(X, [[1, 0, 0], [2, 1, 0], [3, 2, 1], [4, 3, 2]])


class TestNoise:
    def test_variance_formula(self):
        assert noise_variance(8, 15.0) == pytest.approx(8 / 10 ** 1.5)
        assert noise_variance(1, 0.0) == 1.0

    def test_empirical_snr_calibration(self):
        cfg = ExperimentConfig(packet_len=200)
        sig = noise = 0.0
        for seed in range(2000):
            traj, X, y = draw_realization(cfg, np.random.default_rng(seed))
            clean = np.einsum("ij,ij->i", X, traj.W)
            sig += clean @ clean
            noise += (y - clean) @ (y - clean)
        assert 10 * np.log10(sig / noise) == pytest.approx(cfg.snr_db, abs=0.2)
