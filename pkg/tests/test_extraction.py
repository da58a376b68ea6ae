import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eonoise import extraction
from eonoise.chain import ExcessNoiseSpectrum
from eonoise.config import ExperimentConfig
from eonoise.errors import (
    DegenerateDesignError,
    FitFailureError,
    InsufficientDataError,
    InvalidInputError,
)
from eonoise.extraction import (
    decompose_nidiff,
    detect_drive_edges,
    extract_nidiff_trace,
    fit_multiexponential,
    fit_noise_slice,
    fit_powerlaw,
    fit_resonance,
    fit_resonance_trace,
    multiexponential,
)
from eonoise.numfit import FitProblem, nonlinear_least_squares
from eonoise.physics import ResonatorParams, coherent_reflection, noise_transmission
from eonoise.simulate import (
    PulseTrain,
    bath_trajectory,
    synthesize_coherent_heatmap,
    synthesize_heatmap,
)

TWO_PI = 2 * np.pi
W0 = TWO_PI * 6.587e9
R = ResonatorParams(W0, TWO_PI * 0.3e6, TWO_PI * 0.5e6)
FREQS = W0 + TWO_PI * np.linspace(-5e6, 5e6, 121)


def quiet_config(**over):
    data = {"noise": {"power_sigma_w": 0.0, "coherent_sigma": 0.0}, "decay": None, "sweep": None}
    data.update(over)
    return ExperimentConfig(data)


def simulate_main(cfg):
    run = cfg.runs()["main"]
    m, rr, cal = cfg.bath_model(), cfg.resonator_response(), cfg.true_calibration()
    noise = cfg.data["noise"]
    hm = synthesize_heatmap(run.pulse, m, rr, cal, run.times, run.frequencies, run.t_c,
                            noise_sigma=noise["power_sigma_w"], seed=1)
    ch = synthesize_coherent_heatmap(run.pulse, m, rr, run.times, run.frequencies,
                                     noise_sigma=noise["coherent_sigma"], seed=1)
    res = fit_resonance_trace(ch)
    return run, hm, res, extract_nidiff_trace(hm, cal, res)


class TestFitResonance:
    @pytest.mark.parametrize("ki,ke", [(0.3e6, 0.5e6), (0.5e6, 0.5e6), (0.8e6, 0.1e6), (0.05e6, 0.9e6)])
    def test_noiseless_recovery(self, ki, ke):
        true = ResonatorParams(W0 + TWO_PI * 0.37e6, TWO_PI * ki, TWO_PI * ke)
        fit = fit_resonance(FREQS, coherent_reflection(FREQS, true))
        assert fit.omega0 == pytest.approx(true.omega0, rel=1e-12)
        assert fit.kappa_i == pytest.approx(true.kappa_i, rel=1e-6)
        assert fit.kappa_e == pytest.approx(true.kappa_e, rel=1e-6)
        assert fit.diagnostics["converged"]

    def test_critical_coupling(self):
        true = ResonatorParams(W0, TWO_PI * 0.4e6, TWO_PI * 0.4e6)
        fit = fit_resonance(FREQS, coherent_reflection(FREQS, true))
        assert fit.kappa_i == pytest.approx(fit.kappa_e, rel=1e-6)

    def test_noisy_recovery(self, rng):
        s = coherent_reflection(FREQS, R) + 1e-3 * (rng.normal(size=FREQS.size) + 1j * rng.normal(size=FREQS.size))
        fit = fit_resonance(FREQS, s)
        assert abs(fit.omega0 - R.omega0) < 0.01 * R.kappa
        assert fit.kappa_i == pytest.approx(R.kappa_i, rel=0.03)
        assert fit.kappa_e == pytest.approx(R.kappa_e, rel=0.03)

    def test_flat_response_fails(self, rng):
        with pytest.raises(FitFailureError):
            fit_resonance(FREQS, np.ones(FREQS.size, dtype=complex))
        noisy = 1 + 1e-3 * (rng.normal(size=FREQS.size) + 1j * rng.normal(size=FREQS.size))
        with pytest.raises(FitFailureError):
            fit_resonance(FREQS, noisy)

    def test_negative_linewidth_rejected(self):
        # reflection gain |S| > 1 needs kappa_i < 0, which the fit must refuse
        ke = TWO_PI * 0.5e6
        ki = -0.2 * ke
        half = 0.5 * (ki + ke)
        s = 1 - ke / (half + 1j * (FREQS - W0))
        with pytest.raises(FitFailureError):
            fit_resonance(FREQS, s, init=ResonatorParams(W0, 0.1 * ke, ke))

    def test_too_few_points(self):
        f = FREQS[:7]
        with pytest.raises(InsufficientDataError):
            fit_resonance(f, coherent_reflection(f, R))

    def test_warm_start_trace(self):
        cfg = quiet_config()
        run = cfg.runs()["main"]
        ch = synthesize_coherent_heatmap(run.pulse, cfg.bath_model(), cfg.resonator_response(), run.times,
                                         run.frequencies)
        traj = fit_resonance_trace(ch)
        b = bath_trajectory(run.pulse, cfg.bath_model(), run.times)
        expected = cfg.resonator_response().base.omega0 + cfg.resonator_response().freq_shift_coeff * b.n_fast
        np.testing.assert_allclose(traj.omega0, expected, rtol=1e-12)


class TestSliceFit:
    def test_exact_recovery(self):
        T = noise_transmission(FREQS, R)
        fit = fit_noise_slice(ExcessNoiseSpectrum(FREQS, 0.55 + 2.0 * T), R)
        assert fit.n_bg == pytest.approx(0.55, rel=1e-9)
        assert fit.n_i_diff == pytest.approx(2.0, rel=1e-9)
        assert fit.n_e_bounds == (0.0, fit.n_bg)
        assert fit.n_i_bounds == (fit.n_i_diff, fit.n_i_diff + fit.n_bg)
        assert fit.flags == []

    def test_flat_spectrum(self):
        fit = fit_noise_slice(ExcessNoiseSpectrum(FREQS, np.full(FREQS.size, 0.4)), R)
        assert abs(fit.n_i_diff) < 1e-12
        assert fit.n_bg == pytest.approx(0.4, rel=1e-12)

    def test_resonance_outside_window_is_degenerate(self):
        far = ResonatorParams(W0 + TWO_PI * 5e9, R.kappa_i, R.kappa_e)
        with pytest.raises(DegenerateDesignError):
            fit_noise_slice(ExcessNoiseSpectrum(FREQS, np.ones(FREQS.size)), far)

    @given(st.floats(-1, 3), st.floats(-2, 5), st.integers(0, 1000))
    def test_closed_form_matches_iterative(self, n_bg, n_diff, seed):
        rng = np.random.default_rng(seed)
        T = noise_transmission(FREQS, R)
        s = n_bg + n_diff * T + 0.01 * rng.normal(size=FREQS.size)
        closed = fit_noise_slice(ExcessNoiseSpectrum(FREQS, s), R)
        it = nonlinear_least_squares(FitProblem(lambda p: p[0] + p[1] * T - s, 2), [0.0, 0.0])
        assert closed.n_bg == pytest.approx(it.parameters[0], abs=1e-8)
        assert closed.n_i_diff == pytest.approx(it.parameters[1], abs=1e-8)

    def test_negative_values_flagged(self):
        T = noise_transmission(FREQS, R)
        fit = fit_noise_slice(ExcessNoiseSpectrum(FREQS, -0.1 - 0.5 * T), R)
        assert "negative n_bg" in fit.flags and "negative n_i_diff" in fit.flags


class TestTrace:
    def test_matches_per_slice_fits(self):
        cfg = quiet_config()
        run, hm, res, trace = simulate_main(cfg)
        from eonoise.chain import compute_sdev

        for k in (0, 150, 250, 399):
            spec = compute_sdev(hm.power_on[k], hm.power_off[k], cfg.true_calibration(), hm.frequencies)
            one = fit_noise_slice(spec, res.at(k))
            assert trace.n_i_diff[k] == pytest.approx(one.n_i_diff, rel=1e-9, abs=1e-12)
            assert trace.n_bg[k] == pytest.approx(one.n_bg, rel=1e-9, abs=1e-12)

    def test_zero_drive_gives_zero_diff(self):
        cfg = quiet_config(pulse={"peak_power_dbm": -200.0})
        _, _, _, trace = (None, None, None, None)
        run = cfg.runs()["main"]
        hm = synthesize_heatmap(run.pulse, cfg.bath_model(), cfg.resonator_response(), cfg.true_calibration(),
                                run.times, run.frequencies, run.t_c, noise_sigma=1e-11, seed=4)
        trace = extract_nidiff_trace(hm, cfg.true_calibration(), cfg.resonator_response().base)
        sigma_q = 1e-11 / cfg.true_calibration().quantum_power
        assert np.max(np.abs(trace.n_i_diff)) < 0.05 + 10 * sigma_q

    def test_rise_and_fall_times(self):
        cfg = quiet_config(pulse={"peak_power_dbm": 6.0, "width": 5.2e-6, "delay": 6.6e-6},
                           grid={"t_span": 16e-6})
        run, hm, res, trace = simulate_main(cfg)
        t_on, t_off = detect_drive_edges(res.times, res.omega0)
        assert t_on == pytest.approx(6.6e-6, abs=0.1e-6)
        assert t_off == pytest.approx(11.8e-6, abs=0.1e-6)
        # the fast jump dominates the excursion, so a quarter-height threshold tracks the edges
        y = trace.n_i_diff
        level = y[0] + 0.25 * (y.max() - y[0])
        assert trace.times[np.argmax(y > level)] == pytest.approx(6.6e-6, abs=0.5e-6)
        # the filtered trace falls fastest right after the drive turns off
        steepest_fall = trace.times[np.argmin(np.diff(y)) + 1]
        assert steepest_fall == pytest.approx(11.8e-6, abs=0.5e-6)

    def test_round_trip_with_noise(self):
        cfg = ExperimentConfig({"decay": None, "sweep": None})
        run, hm, res, trace = simulate_main(cfg)
        b = bath_trajectory(run.pulse, cfg.bath_model(), run.times)
        settled = (run.times < 4e-6) | ((run.times > 6.5e-6) & (run.times < 9e-6))
        err = trace.n_i_diff[settled] - b.n_i_diff[settled]
        assert np.sqrt(np.mean(err**2)) < 0.02
        assert np.median(trace.n_bg) == pytest.approx(b.n_bg[0], abs=0.01)


class TestDecomposition:
    def test_zero_trace(self):
        t = np.linspace(0, 16e-6, 401)
        d = decompose_nidiff(t, np.zeros_like(t), 5e-6, 10e-6, 1e-6)
        assert d.n_fast == 0 and d.n_slow_off == 0 and d.n_slow_on == 0

    @given(st.floats(0, 2), st.floats(0, 1), st.floats(-1e5, 1e5), st.integers(0, 100))
    def test_identities(self, off, jump, slope, seed):
        rng = np.random.default_rng(seed)
        t = np.linspace(0, 16e-6, 401)
        y = np.where(t < 5e-6, off, off + jump + slope * (t - 5e-6)) + 0.01 * rng.normal(size=t.size)
        d = decompose_nidiff(t, y, 5e-6, 10e-6, 1e-6)
        assert d.n_fast + d.n_slow_off == pytest.approx(d.after_laser, abs=1e-12)
        assert d.n_fast + d.n_slow_off + d.n_slow_on == pytest.approx(d.midpulse, abs=1e-12)

    def test_piecewise_linear_exact(self):
        t = np.linspace(0, 16e-6, 401)
        y = np.where(t < 5e-6, 0.3, 0.3 + 0.5 + 2e4 * (t - 5e-6))
        d = decompose_nidiff(t, y, 5e-6, 10e-6, 1e-6)
        assert d.n_slow_off == pytest.approx(0.3, rel=1e-12)
        assert d.n_fast == pytest.approx(0.5, rel=1e-9)
        assert d.n_slow_on == pytest.approx(2e4 * 2.5e-6, rel=1e-9)

    def test_short_pulse_rejected(self):
        t = np.linspace(0, 16e-6, 401)
        with pytest.raises(InsufficientDataError):
            decompose_nidiff(t, np.zeros_like(t), 5e-6, 6e-6, 0.6e-6)
        with pytest.raises(InvalidInputError):
            decompose_nidiff(t, np.zeros_like(t), 6e-6, 5e-6, 0.1e-6)

    def test_simulator_ground_truth(self):
        cfg = quiet_config()
        run, hm, res, trace = simulate_main(cfg)
        m, p = cfg.bath_model(), run.pulse
        t_on, t_off = detect_drive_edges(res.times, res.omega0)
        d = decompose_nidiff(trace.times, trace.n_i_diff, t_on, t_off, 5 * run.t_c)
        b = bath_trajectory(p, m, run.times)
        slow = lambda t: np.interp(t, b.times, b.n_slow_total)
        fast_true = m.fast_gain * (p.peak_power / 1e-3) ** m.fast_exponent
        on_true = slow(p.delay + p.width / 2) - slow(p.delay)
        assert d.n_fast == pytest.approx(fast_true, rel=0.05)
        assert d.n_slow_off == pytest.approx(slow(p.delay), rel=0.05)
        assert d.n_slow_on == pytest.approx(on_true, rel=0.05)


class TestMultiExponential:
    T = np.linspace(0, 10, 400)

    def test_single_exponential_exact(self):
        y = 2.0 * np.exp(-self.T / 1.7) + 0.5
        fit = fit_multiexponential(self.T, y, 1)
        assert fit.taus[0] == pytest.approx(1.7, rel=1e-6)
        assert fit.amplitudes[0] == pytest.approx(2.0, rel=1e-6)
        assert fit.offset == pytest.approx(0.5, rel=1e-6)

    def test_constant_trace(self):
        fit = fit_multiexponential(self.T, np.full(self.T.size, 0.36), 1)
        assert abs(fit.amplitudes[0]) < 1e-6
        assert fit.offset == pytest.approx(0.36, rel=1e-6)

    def test_triple_exponential_noiseless(self):
        t = np.linspace(0, 9e-3, 2000)
        y = multiexponential(t, [0.3, 0.2, 0.1], [33e-6, 0.6e-3, 6e-3], 0.36)
        fit = fit_multiexponential(t, y, 3)
        np.testing.assert_allclose(fit.taus, [33e-6, 0.6e-3, 6e-3], rtol=1e-5)
        np.testing.assert_allclose(fit.amplitudes, [0.3, 0.2, 0.1], rtol=1e-5)
        assert fit.offset == pytest.approx(0.36, rel=1e-5)
        assert np.all(np.diff(fit.taus) > 0)
        assert fit.tau_errors is not None and np.all(np.isfinite(fit.tau_errors))

    @given(st.floats(0.0, 3.0))
    def test_time_offset_equivariance(self, t0):
        y = 1.0 * np.exp(-self.T / 0.8) + 0.4 * np.exp(-self.T / 4.0) + 0.1
        base = fit_multiexponential(self.T, y, 2)
        shifted = fit_multiexponential(self.T + t0, y, 2)
        np.testing.assert_allclose(shifted.taus, base.taus, rtol=1e-6)
        np.testing.assert_allclose(shifted.amplitudes, base.amplitudes * np.exp(t0 / base.taus), rtol=1e-6)
        assert shifted.offset == pytest.approx(base.offset, rel=1e-6, abs=1e-9)

    @given(st.floats(1e-3, 1e3))
    def test_value_scale_equivariance(self, c):
        y = 1.0 * np.exp(-self.T / 0.8) + 0.4 * np.exp(-self.T / 4.0) + 0.1
        base = fit_multiexponential(self.T, y, 2)
        scaled = fit_multiexponential(self.T, c * y, 2)
        np.testing.assert_allclose(scaled.taus, base.taus, rtol=1e-6)
        np.testing.assert_allclose(scaled.amplitudes, c * base.amplitudes, rtol=1e-6)
        assert scaled.offset == pytest.approx(c * base.offset, rel=1e-6)

    def test_over_parameterised_warns(self):
        y = 2.0 * np.exp(-self.T / 1.7) + 0.5
        rng = np.random.default_rng(0)
        fit = fit_multiexponential(self.T, y + 1e-4 * rng.normal(size=self.T.size), 3)
        ratios = fit.taus[1:] / fit.taus[:-1]
        if np.any(ratios < 1.05):
            assert fit.diagnostics["warnings"]

    def test_degeneracy_warning_recorded(self, monkeypatch):
        from eonoise.numfit import FitResult

        def collapsed(problem, init, tol=None):
            # a converged solution whose two time constants sit 2% apart
            x = np.array([1.0, 1.0, np.log(1.0), np.log(1.02), 0.0])
            return FitResult(x, 1e-3, 5, True, 0.0, 1.0, "converged")

        monkeypatch.setattr(extraction, "nonlinear_least_squares", collapsed)
        fit = fit_multiexponential(self.T, np.exp(-self.T), 2, n_starts=1)
        assert fit.diagnostics["warnings"]

    def test_all_starts_failing(self, monkeypatch):
        from eonoise.numfit import FitResult

        def never(problem, init, tol=None):
            return FitResult(np.asarray(init, float), 1.0, 1, False, 1.0, 1.0, "maximum iterations reached")

        monkeypatch.setattr(extraction, "nonlinear_least_squares", never)
        with pytest.raises(FitFailureError) as info:
            fit_multiexponential(self.T, np.exp(-self.T), 1)
        assert info.value.best_residual is not None

    def test_preconditions(self):
        with pytest.raises(InvalidInputError):
            fit_multiexponential(self.T, np.ones(self.T.size), 0)
        with pytest.raises(InsufficientDataError):
            fit_multiexponential(self.T[:9], np.ones(9), 2)
        with pytest.raises(InvalidInputError):
            fit_multiexponential(self.T[::-1], np.ones(self.T.size), 1)


class TestPowerLaw:
    X = np.logspace(-5, -1, 11)

    def test_exact_exponent(self):
        fit = fit_powerlaw(self.X, 3.0 * self.X**0.82)
        assert abs(fit.exponent - 0.82) < 1e-9
        assert fit.prefactor == pytest.approx(3.0, rel=1e-9)
        assert fit.r_squared == pytest.approx(1.0)

    def test_constant(self):
        fit = fit_powerlaw(self.X, np.full(self.X.size, 2.0))
        assert abs(fit.exponent) < 1e-12

    @given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
    def test_rescaling_invariance(self, a, b):
        y = self.X**0.3 * (1 + 0.05 * np.sin(np.arange(self.X.size)))
        base = fit_powerlaw(self.X, y)
        assert fit_powerlaw(a * self.X, b * y).exponent == pytest.approx(base.exponent, abs=1e-9)

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            fit_powerlaw(self.X, -self.X)
        with pytest.raises(InsufficientDataError):
            fit_powerlaw(self.X[:2], self.X[:2])
