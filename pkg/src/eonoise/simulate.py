"""Synthetic pulsed-drive experiments.

Bath occupancies follow a Hammerstein model: the instantaneous optical power
passes through a static power law ``gain * (P / 1 mW) ** exponent`` and then
through independent first-order relaxations. The background bath sees the
period-averaged power instead. Channels start in the periodic steady state
of the pulse train unless ``initial="rest"`` is requested.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import N_QUANTUM, CalibrationSweep, chain_output_power, device_output_power
from .errors import ConfigurationError, InvalidInputError
from .kernels import exponential_smoothing, first_order_hold_response
from .physics import ResonatorParams, bose_einstein_occupancy

__all__ = [
    "REFERENCE_POWER",
    "PulseTrain",
    "BathModel",
    "BathTrajectory",
    "ResonatorResponse",
    "ResonatorTrajectory",
    "NoiseHeatMap",
    "CoherentHeatMap",
    "pulse_waveform",
    "bath_trajectory",
    "resonator_trajectory",
    "lockin_filter",
    "synthesize_heatmap",
    "synthesize_coherent_heatmap",
    "synthesize_calibration_sweep",
]

REFERENCE_POWER = 1e-3  # W; power-law reference scale

_RAMP_SUBDIVISIONS = 8


@dataclass(frozen=True)
class PulseTrain:
    """Periodic trapezoidal optical drive.

    Ramps of ``edge_time`` sit inside ``width``; the pulse starts ``delay``
    seconds into each period.
    """

    peak_power: float
    width: float
    period: float
    edge_time: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        if self.peak_power < 0:
            raise ConfigurationError("peak_power must be >= 0")
        if not 0 < self.width < self.period:
            raise ConfigurationError("need 0 < width < period")
        if self.edge_time < 0 or 2 * self.edge_time > self.width:
            raise ConfigurationError("need 0 <= edge_time <= width/2")
        if self.delay < 0 or self.delay + self.width > self.period:
            raise ConfigurationError("pulse must fit inside one period after the delay")

    @property
    def duty(self):
        return self.width / self.period

    @property
    def nominal_average_power(self):
        """``P_peak * duty``, the rectangular-pulse average."""
        return self.peak_power * self.duty

    @property
    def average_power(self):
        """Exact period average of the trapezoid."""
        return self.peak_power * (self.width - self.edge_time) / self.period

    def knots(self, t0, t1):
        """Times and powers at which the waveform is piecewise linear on ``[t0, t1]``.

        A jump appears as two knots at the same time. Ramps are subdivided so
        a non-linear function of power is well represented.
        """
        P, w, e, T = self.peak_power, self.width, self.edge_time, self.period
        if e > 0:
            frac = np.linspace(0.0, 1.0, _RAMP_SUBDIVISIONS + 1)
            rel = np.concatenate([frac * e, w - e + frac * e])
            val = np.concatenate([frac * P, (1 - frac) * P])
        else:
            rel = np.array([0.0, 0.0, w, w])
            val = np.array([0.0, P, P, 0.0])
        k0 = int(np.floor((t0 - self.delay) / T)) - 1
        k1 = int(np.ceil((t1 - self.delay) / T)) + 1
        starts = self.delay + T * np.arange(k0, k1 + 1)
        tk = (starts[:, None] + rel[None, :]).ravel()
        pk = np.tile(val, starts.size)
        keep = (tk > t0) & (tk < t1)
        tk, pk = tk[keep], pk[keep]
        ends = np.array([t0, t1])
        return np.concatenate([[t0], tk, [t1]]), np.concatenate([pulse_waveform(self, ends[:1]), pk, pulse_waveform(self, ends[1:])])


def pulse_waveform(p, t):
    """Instantaneous optical power of the pulse train at times ``t`` (W)."""
    t = np.asarray(t, dtype=float)
    phase = np.mod(t - p.delay, p.period)
    P, w, e = p.peak_power, p.width, p.edge_time
    out = np.zeros(phase.shape)
    if e > 0:
        up = phase < e
        flat = (phase >= e) & (phase <= w - e)
        down = (phase > w - e) & (phase < w)
        out[up] = P * phase[up] / e
        out[flat] = P
        out[down] = P * (w - phase[down]) / e
    else:
        out[phase < w] = P
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class BathModel:
    fast_gain: float
    fast_exponent: float
    fast_tau: float
    slow_channels: Sequence = ()  # (gain, tau) pairs
    slow_exponent: float = 0.3
    bg_gain: float = 0.0
    bg_exponent: float = 0.82
    bg_tau: float = 0.1

    def __post_init__(self):
        chans = tuple((float(g), float(tau)) for g, tau in self.slow_channels)
        object.__setattr__(self, "slow_channels", chans)
        gains = [self.fast_gain, self.bg_gain] + [g for g, _ in chans]
        taus = [self.fast_tau, self.bg_tau] + [tau for _, tau in chans]
        if any(g < 0 for g in gains):
            raise ConfigurationError("bath gains must be >= 0")
        if any(not tau > 0 for tau in taus):
            raise ConfigurationError("bath time constants must be > 0")
        if any(not x > 0 for x in (self.fast_exponent, self.slow_exponent, self.bg_exponent)):
            raise ConfigurationError("power-law exponents must be > 0")
        if chans and not self.fast_tau < min(tau for _, tau in chans):
            raise ConfigurationError("fast_tau must be shorter than every slow time constant")


@dataclass
class BathTrajectory:
    times: np.ndarray
    n_fast: np.ndarray
    n_slow: np.ndarray  # (channels, time)
    n_bg: np.ndarray

    @property
    def n_slow_total(self):
        return self.n_slow.sum(axis=0) if self.n_slow.size else np.zeros_like(self.times)

    @property
    def n_i_diff(self):
        return self.n_fast + self.n_slow_total


def _check_times(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InvalidInputError("need a 1-D time grid with at least two samples")
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("times must be strictly increasing")
    if t[0] < 0:
        raise InvalidInputError("times must be non-negative")
    return t


def _merged_drive(p, times, exponent):
    """Drive ``u = (P/1 mW)**exponent`` on the union of waveform knots and sample times.

    ``u`` is set at the knots and linearly interpolated at the samples, so the
    integrated drive does not depend on where samples fall. Returns
    (t, u, sample index).
    """
    t_end = float(times[-1])
    tk, pk = p.knots(0.0, t_end + p.period)
    uk = (pk / REFERENCE_POWER) ** exponent
    # right-continuous lookup: a sample at a jump sees the post-jump value
    j = np.clip(np.searchsorted(tk, times, side="right"), 1, tk.size - 1)
    i = j - 1
    span = tk[j] - tk[i]
    w = np.where(span > 0, (times - tk[i]) / np.where(span > 0, span, 1.0), 0.0)
    us = uk[i] + w * (uk[j] - uk[i])
    t_all = np.concatenate([tk, times])
    u_all = np.concatenate([uk, us])
    is_sample = np.concatenate([np.zeros(tk.size, dtype=int), np.ones(times.size, dtype=int)])
    order = np.lexsort((is_sample, t_all))
    return t_all[order], u_all[order], np.flatnonzero(is_sample[order])


def _periodic_start(p, gain, exponent, tau):
    """State at t = 0 that repeats after one period of drive."""
    tk, pk = p.knots(0.0, p.period)
    u = (pk / REFERENCE_POWER) ** exponent
    end = first_order_hold_response(tk, u, tau, gain, 0.0)[-1]
    return end / -np.expm1(-p.period / tau)


def bath_trajectory(p, m, times, initial="periodic"):
    """Fast, slow and background occupancies sampled at ``times``.

    Integration is exact for a drive that is linear between knots; the
    only approximation is the power law applied along the (short) ramps,
    which is sampled at the ramp subdivision knots.
    """
    times = _check_times(times)
    if initial not in ("periodic", "rest"):
        raise InvalidInputError("initial must be 'periodic' or 'rest'")
    drives = {}

    def channel(gain, exponent, tau):
        if exponent not in drives:
            drives[exponent] = _merged_drive(p, times, exponent)
        t_all, u_all, idx = drives[exponent]
        n0 = _periodic_start(p, gain, exponent, tau) if initial == "periodic" else 0.0
        return first_order_hold_response(t_all, u_all, tau, gain, n0)[idx]

    n_fast = channel(m.fast_gain, m.fast_exponent, m.fast_tau)
    if m.slow_channels:
        n_slow = np.vstack([channel(g, m.slow_exponent, tau) for g, tau in m.slow_channels])
    else:
        n_slow = np.zeros((0, times.size))
    u_bg = (p.average_power / REFERENCE_POWER) ** m.bg_exponent
    n0_bg = m.bg_gain * u_bg if initial == "periodic" else 0.0
    n_bg = first_order_hold_response(times, np.full(times.size, u_bg), m.bg_tau, m.bg_gain, n0_bg)
    return BathTrajectory(times=times, n_fast=n_fast, n_slow=n_slow, n_bg=n_bg)


@dataclass(frozen=True)
class ResonatorResponse:
    """Linear coupling of the fast-bath occupancy to resonance and intrinsic loss.

    ``freq_shift_coeff`` (rad/s per quantum) is normally negative,
    ``linewidth_coeff`` (rad/s per quantum, added to ``kappa_i``) positive.
    """

    base: ResonatorParams
    freq_shift_coeff: float = 0.0
    linewidth_coeff: float = 0.0


@dataclass
class ResonatorTrajectory:
    times: np.ndarray
    omega0: np.ndarray
    kappa_i: np.ndarray
    kappa_e: np.ndarray

    def __len__(self):
        return self.times.size

    def at(self, k):
        return ResonatorParams(float(self.omega0[k]), float(self.kappa_i[k]), float(self.kappa_e[k]))

    def params(self):
        return [self.at(k) for k in range(len(self))]


def resonator_trajectory(times, n_fast, rr):
    n_fast = np.asarray(n_fast, dtype=float)
    times = np.asarray(times, dtype=float)
    if n_fast.shape != times.shape:
        raise InvalidInputError("n_fast must be sampled on the time grid")
    omega0 = rr.base.omega0 + rr.freq_shift_coeff * n_fast
    kappa_i = rr.base.kappa_i + rr.linewidth_coeff * n_fast
    if np.any(kappa_i < 0):
        raise ConfigurationError("resonator response drives kappa_i negative")
    if np.any(omega0 <= 0):
        raise ConfigurationError("resonator response drives omega0 non-positive")
    return ResonatorTrajectory(times, omega0, kappa_i, np.full(times.shape, rr.base.kappa_e))


def _uniform_step(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidInputError("need at least two uniformly spaced samples")
    d = np.diff(times)
    dt = float(np.mean(d))
    if not dt > 0 or np.max(np.abs(d - dt)) > 1e-9 * dt:
        raise InvalidInputError("lock-in filtering needs uniform sampling")
    return dt


def lockin_filter(times, trace, t_c, initial=None):
    """First-order low-pass of a uniformly sampled trace (time on axis 0).

    ``y[k] = a*y[k-1] + (1-a)*x[k]`` with ``a = exp(-dt/t_c)``; the state
    before the first sample is ``initial`` (default: the first sample, i.e.
    a settled filter).
    """
    if not t_c > 0:
        raise InvalidInputError("t_c must be > 0")
    dt = _uniform_step(times)
    if dt > t_c / 5 * (1 + 1e-9):
        raise InvalidInputError(f"sample step {dt:.3g} s exceeds t_c/5 = {t_c / 5:.3g} s")
    x = np.asarray(trace)
    if x.shape[0] != np.asarray(times).size:
        raise InvalidInputError("trace length does not match the time axis")
    a = np.exp(-dt / t_c)
    y0 = x[0] if initial is None else initial
    if np.iscomplexobj(x):
        y0 = np.asarray(y0)
        return exponential_smoothing(x.real, a, y0.real) + 1j * exponential_smoothing(x.imag, a, y0.imag)
    return exponential_smoothing(x, a, y0)


@dataclass
class NoiseHeatMap:
    times: np.ndarray
    frequencies: np.ndarray
    power_on: np.ndarray
    power_off: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_grid(self.times, self.frequencies, self.power_on, self.power_off)


@dataclass
class CoherentHeatMap:
    times: np.ndarray
    frequencies: np.ndarray
    s11: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_grid(self.times, self.frequencies, self.s11)


def _check_grid(times, freqs, *grids):
    times = np.asarray(times)
    freqs = np.asarray(freqs)
    for g in grids:
        if np.shape(g) != (times.size, freqs.size):
            raise InvalidInputError(f"grid shape {np.shape(g)} does not match axes ({times.size}, {freqs.size})")
    if np.any(np.diff(times) <= 0) or np.any(np.diff(freqs) <= 0):
        raise InvalidInputError("heat-map axes must be strictly increasing")


def _column_rngs(seed, n, stream):
    ss = np.random.SeedSequence([int(seed), stream])
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _column_noise(seed, stream, shape, sigma):
    nt, nf = shape
    if sigma == 0:
        return np.zeros(shape)
    return np.column_stack([rng.normal(0.0, sigma, nt) for rng in _column_rngs(seed, nf, stream)])


def synthesize_heatmap(p, m, rr, cal, times, frequencies, t_c, noise_sigma=0.0, seed=0,
                       n_e_fraction=0.5, initial="periodic"):
    """On/off output-noise heat maps for a pulse train.

    ``n_bg`` is split into an external-bath share ``n_e = n_e_fraction*n_bg``
    and a downstream share. The intrinsic bath is ``n_i = n_i_diff + n_e``.
    ``cal.attenuation_l`` is applied as the true VTS-to-device loss.
    """
    if not 0 <= n_e_fraction <= 1:
        raise ConfigurationError("n_e_fraction must lie in [0, 1]")
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be >= 0")
    times = _check_times(times)
    freqs = np.asarray(frequencies, dtype=float)
    bath = bath_trajectory(p, m, times, initial=initial)
    res = resonator_trajectory(times, bath.n_fast, rr)
    trans = _transmission_grid(freqs, res)
    n_e = n_e_fraction * bath.n_bg
    delta_sys = (1 - n_e_fraction) * bath.n_bg
    s_out = n_e[:, None] + trans * bath.n_i_diff[:, None]
    p_on = device_output_power(s_out, delta_sys[:, None], cal)
    p_off = np.full(p_on.shape, cal.quantum_power * (N_QUANTUM + cal.n_sys))
    p_on = lockin_filter(times, p_on, t_c)
    p_off = lockin_filter(times, p_off, t_c)
    p_on = p_on + _column_noise(seed, 0, p_on.shape, noise_sigma)
    p_off = p_off + _column_noise(seed, 1, p_off.shape, noise_sigma)
    return NoiseHeatMap(times, freqs, p_on, p_off, seed=int(seed))


def _transmission_grid(freqs, res):
    half = 0.5 * (res.kappa_i + res.kappa_e)
    det = freqs[None, :] - res.omega0[:, None]
    return (res.kappa_i * res.kappa_e)[:, None] / (half[:, None] ** 2 + det**2)


def synthesize_coherent_heatmap(p, m, rr, times, frequencies, noise_sigma=0.0, seed=0, t_c=None,
                                initial="periodic"):
    """Complex reflection of a weak probe for every (time, frequency) cell.

    ``noise_sigma`` applies to each quadrature. ``t_c`` optionally low-passes
    each frequency column before noise is added.
    """
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be >= 0")
    times = _check_times(times)
    freqs = np.asarray(frequencies, dtype=float)
    bath = bath_trajectory(p, m, times, initial=initial)
    res = resonator_trajectory(times, bath.n_fast, rr)
    half = 0.5 * (res.kappa_i + res.kappa_e)
    s11 = 1.0 - res.kappa_e[:, None] / (half[:, None] + 1j * (freqs[None, :] - res.omega0[:, None]))
    if t_c is not None:
        s11 = lockin_filter(times, s11, t_c)
    if noise_sigma > 0:
        s11 = s11 + _column_noise(seed, 2, s11.shape, noise_sigma) + 1j * _column_noise(seed, 3, s11.shape, noise_sigma)
    return CoherentHeatMap(times, freqs, s11, seed=int(seed))


def synthesize_calibration_sweep(true_cal, temperatures, noise_sigma=0.0, seed=0):
    """VTS sweep: chain output power at each stage temperature, plus Gaussian noise."""
    T = np.asarray(temperatures, dtype=float)
    n_s = bose_einstein_occupancy(true_cal.omega_s / (2 * np.pi), T)
    n_i = bose_einstein_occupancy(true_cal.omega_i / (2 * np.pi), T)
    P = chain_output_power(n_s, n_i, true_cal)
    if noise_sigma > 0:
        P = P + np.random.default_rng(np.random.SeedSequence([int(seed), 4])).normal(0.0, noise_sigma, T.size)
    return CalibrationSweep(T, np.asarray(P, dtype=float))
