"""Analysis pipeline: resonance tracking, per-slice bath extraction,
fast/slow decomposition and the decay / power-law fits."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .chain import compute_sdev
from .errors import (
    DegenerateDesignError,
    FitFailureError,
    InsufficientDataError,
    InvalidInputError,
)
from .numfit import FitProblem, Tolerances, linear_least_squares, nonlinear_least_squares
from .physics import ResonatorParams, noise_transmission
from .simulate import ResonatorTrajectory

__all__ = [
    "NoiseSliceFit",
    "NoiseTrace",
    "Decomposition",
    "MultiExpFit",
    "PowerLawFit",
    "fit_resonance",
    "fit_resonance_trace",
    "detect_drive_edges",
    "fit_noise_slice",
    "extract_nidiff_trace",
    "decompose_nidiff",
    "fit_multiexponential",
    "multiexponential",
    "fit_powerlaw",
]

# ptp of T(omega) below this means the window holds no usable Lorentzian
_MIN_TRANSMISSION_SPREAD = 1e-6


# ---------------------------------------------------------------- resonance


def _reflection_jacobian(omega, omega0, kappa_i, kappa_e):
    D = 0.5 * (kappa_i + kappa_e) + 1j * (omega - omega0)
    D2 = D * D
    d_w0 = -1j * kappa_e / D2
    d_ki = kappa_e / (2 * D2)
    d_ke = kappa_e / (2 * D2) - 1.0 / D
    return np.column_stack([d_w0, d_ki, d_ke])


def _robust_noise(s11):
    # MAD of first differences per quadrature; the resonance itself only
    # touches a few differences, so it barely moves the median
    d = np.diff(s11)
    mad = [np.median(np.abs(q - np.median(q))) for q in (d.real, d.imag)]
    return float(1.4826 * max(mad) / np.sqrt(2))


def _initial_resonance(omega, s11):
    absorption = 1.0 - np.abs(s11) ** 2
    noise = _robust_noise(s11)
    baseline = float(np.median(absorption))
    k = int(np.argmax(absorption))
    contrast = absorption[k] - baseline
    if not contrast > max(10 * noise, 1e-9):
        raise FitFailureError(f"no resonance dip above the noise (contrast {contrast:.3g}, noise {noise:.3g})")
    half = baseline + 0.5 * contrast
    left = k
    while left > 0 and absorption[left] > half:
        left -= 1
    right = k
    while right < omega.size - 1 and absorption[right] > half:
        right += 1

    def cross(i, j):
        a_i, a_j = absorption[i], absorption[j]
        if a_i == a_j:
            return omega[i]
        return omega[i] + (half - a_i) * (omega[j] - omega[i]) / (a_j - a_i)

    w_left = cross(left, left + 1) if absorption[left] <= half else omega[0]
    w_right = cross(right - 1, right) if absorption[right] <= half else omega[-1]
    kappa = max(w_right - w_left, 2 * float(np.min(np.diff(omega))))
    s0 = float(np.real(s11[k]))
    s0 = min(max(s0, -0.999), 0.999)
    return ResonatorParams(float(omega[k]), kappa * (1 + s0) / 2, kappa * (1 - s0) / 2)


def fit_resonance(freqs, s11, init=None, tol=None):
    """Least-squares fit of the one-port reflection model to a complex spectrum.

    Without ``init`` the start point comes from the absorption ``1 - |S|^2``:
    its peak gives omega0, its FWHM the total linewidth, and the real part of
    S at the peak splits it into intrinsic and external rates.
    """
    omega = np.asarray(freqs, dtype=float)
    s11 = np.asarray(s11, dtype=complex)
    if omega.shape != s11.shape or omega.ndim != 1:
        raise InvalidInputError("freqs and s11 must be 1-D of equal length")
    if omega.size < 8:
        raise InsufficientDataError("resonance fit needs at least 8 points")
    if init is None:
        init = _initial_resonance(omega, s11)
    scale = init.kappa
    w_ref = init.omega0

    def unpack(x):
        return w_ref + scale * x[0], scale * x[1], scale * x[2]

    def residual(x):
        w0, ki, ke = unpack(x)
        model = 1.0 - ke / (0.5 * (ki + ke) + 1j * (omega - w0))
        d = model - s11
        return np.concatenate([d.real, d.imag])

    def jacobian(x):
        J = _reflection_jacobian(omega, *unpack(x)) * scale
        return np.vstack([J.real, J.imag])

    x0 = np.array([0.0, init.kappa_i / scale, init.kappa_e / scale])
    result = nonlinear_least_squares(FitProblem(residual, 3, jacobian), x0, tol or Tolerances())
    w0, ki, ke = unpack(result.parameters)
    if ki < 0 or ke < 0 or not ki + ke > 0:
        raise FitFailureError(f"resonance fit produced negative coupling (kappa_i={ki:.4g}, kappa_e={ke:.4g})",
                              best_residual=result.residual_rms)
    return ResonatorParams(float(w0), float(ki), float(ke), diagnostics={
        "residual_rms": result.residual_rms,
        "iterations": result.iterations,
        "converged": result.converged,
        "condition": result.condition,
    })


def fit_resonance_trace(heatmap, warm_start=True):
    """Fit every time slice of a coherent heat map; returns a ResonatorTrajectory."""
    params = []
    prev = None
    for k in range(heatmap.times.size):
        row = heatmap.s11[k]
        fit = None
        if warm_start and prev is not None:
            try:
                fit = fit_resonance(heatmap.frequencies, row, init=prev)
            except FitFailureError:
                fit = None
        if fit is None:
            fit = fit_resonance(heatmap.frequencies, row)
        params.append(fit)
        prev = fit
    return ResonatorTrajectory(
        np.asarray(heatmap.times, dtype=float),
        np.array([p.omega0 for p in params]),
        np.array([p.kappa_i for p in params]),
        np.array([p.kappa_e for p in params]),
    )


def detect_drive_edges(times, omega0):
    """Drive on/off times from the resonance track: half-shift crossings, linearly interpolated."""
    t = np.asarray(times, dtype=float)
    w = np.asarray(omega0, dtype=float)
    shift = w - w[0]
    k_ext = int(np.argmax(np.abs(shift)))
    if shift[k_ext] == 0:
        raise InsufficientDataError("resonance never shifts; drive edges not observable")
    level = 0.5 * shift[k_ext]
    inside = np.abs(shift) >= np.abs(level)
    k_on = int(np.argmax(inside))
    after = np.flatnonzero(~inside[k_on:])
    if after.size == 0:
        raise InsufficientDataError("drive never turns off inside the trace")
    k_off = k_on + int(after[0])

    def interp(i, j):
        return t[i] + (level - shift[i]) * (t[j] - t[i]) / (shift[j] - shift[i])

    t_on = interp(k_on - 1, k_on) if k_on > 0 else t[0]
    return float(t_on), float(interp(k_off - 1, k_off))


# ---------------------------------------------------------------- slice fits


@dataclass
class NoiseSliceFit:
    n_bg: float
    n_i_diff: float
    residual_rms: float
    n_e_bounds: tuple = ()
    n_i_bounds: tuple = ()
    flags: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.n_e_bounds = (0.0, self.n_bg)
        self.n_i_bounds = (self.n_i_diff, self.n_i_diff + self.n_bg)
        if self.n_bg < 0 and "negative n_bg" not in self.flags:
            self.flags.append("negative n_bg")
        if self.n_i_diff < 0 and "negative n_i_diff" not in self.flags:
            self.flags.append("negative n_i_diff")


def fit_noise_slice(spectrum, r):
    """Closed-form fit of ``s_dev = n_bg + T(omega) * n_i_diff`` for one spectrum."""
    s = np.asarray(spectrum.s_dev, dtype=float)
    if s.ndim != 1:
        raise InvalidInputError("fit_noise_slice takes a single spectrum")
    T = noise_transmission(spectrum.frequencies, r)
    if np.ptp(T) < _MIN_TRANSMISSION_SPREAD:
        raise DegenerateDesignError("resonance line shape is flat over the frequency window", rank=1)
    n_bg, n_i_diff = linear_least_squares(np.column_stack([np.ones_like(T), T]), s)
    resid = s - (n_bg + T * n_i_diff)
    return NoiseSliceFit(float(n_bg), float(n_i_diff), float(np.sqrt(np.mean(resid**2))))


@dataclass
class NoiseTrace:
    times: np.ndarray
    n_bg: np.ndarray
    n_i_diff: np.ndarray
    residual_rms: np.ndarray

    def slice_fit(self, k):
        return NoiseSliceFit(float(self.n_bg[k]), float(self.n_i_diff[k]), float(self.residual_rms[k]))

    def __len__(self):
        return self.times.size


def _resonance_arrays(resonance, n):
    if isinstance(resonance, ResonatorParams):
        return (np.full(n, resonance.omega0), np.full(n, resonance.kappa_i), np.full(n, resonance.kappa_e))
    if isinstance(resonance, ResonatorTrajectory):
        arrs = (resonance.omega0, resonance.kappa_i, resonance.kappa_e)
    else:
        resonance = list(resonance)
        arrs = tuple(np.array([getattr(p, a) for p in resonance]) for a in ("omega0", "kappa_i", "kappa_e"))
    if any(np.shape(a) != (n,) for a in arrs):
        raise InvalidInputError("need one resonance per time slice")
    return tuple(np.asarray(a, dtype=float) for a in arrs)


def extract_nidiff_trace(heatmap, cal, resonance_per_slice):
    """Per-slice ``(n_bg, n_i_diff)`` from an on/off heat map.

    Equivalent to :func:`compute_sdev` followed by :func:`fit_noise_slice`
    on every row, evaluated in one vectorised pass.
    """
    spec = compute_sdev(heatmap.power_on, heatmap.power_off, cal, heatmap.frequencies)
    s = spec.s_dev
    nt = s.shape[0]
    w0, ki, ke = _resonance_arrays(resonance_per_slice, nt)
    half = 0.5 * (ki + ke)
    T = (ki * ke)[:, None] / (half[:, None] ** 2 + (spec.frequencies[None, :] - w0[:, None]) ** 2)
    flat = np.ptp(T, axis=1) < _MIN_TRANSMISSION_SPREAD
    if np.any(flat):
        raise DegenerateDesignError(f"resonance line shape is flat in slice {int(np.argmax(flat))}", rank=1)
    Tc = T - T.mean(axis=1, keepdims=True)
    sc = s - s.mean(axis=1, keepdims=True)
    n_i_diff = np.sum(Tc * sc, axis=1) / np.sum(Tc * Tc, axis=1)
    n_bg = s.mean(axis=1) - n_i_diff * T.mean(axis=1)
    resid = s - (n_bg[:, None] + T * n_i_diff[:, None])
    return NoiseTrace(np.asarray(heatmap.times, dtype=float), n_bg, n_i_diff, np.sqrt(np.mean(resid**2, axis=1)))


# ------------------------------------------------------------- decomposition


@dataclass
class Decomposition:
    n_fast: float
    n_slow_off: float
    n_slow_on: float
    t_on: float
    t_off: float
    after_laser: float = float("nan")
    midpulse: float = float("nan")
    slope: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.t_on < self.t_off:
            raise InvalidInputError("t_on must precede t_off")


def decompose_nidiff(times, values, t_on, t_off, exclusion_window, baseline_window=None, filter_lag=0.0):
    """Split an ``n_i_diff`` trace into fast, slow-off and slow-on parts.

    The slow-off level is the mean over the ``baseline_window`` (default:
    ``exclusion_window``) that ends ``exclusion_window`` before ``t_on``. A line
    fitted to ``[t_on + exclusion_window, t_off - exclusion_window]`` is
    extrapolated to ``t_on`` (value right after the drive turns on) and to the
    pulse midpoint. A first-order filter delays a ramp by its time constant;
    pass that as ``filter_lag`` and the line is read ``filter_lag`` later.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise InvalidInputError("times and values must be 1-D of equal length")
    if not t_on < t_off:
        raise InvalidInputError("t_on must precede t_off")
    if exclusion_window < 0:
        raise InvalidInputError("exclusion_window must be >= 0")
    if t_off - t_on < 2 * exclusion_window:
        raise InsufficientDataError("pulse-on segment is shorter than twice the exclusion window")
    if baseline_window is None:
        baseline_window = exclusion_window
    pre_end = t_on - exclusion_window
    pre = (t >= pre_end - baseline_window) & (t <= pre_end)
    if not np.any(pre):
        raise InsufficientDataError("no samples before the drive turns on")
    on = (t >= t_on + exclusion_window) & (t <= t_off - exclusion_window)
    if np.count_nonzero(on) < 2:
        raise InsufficientDataError("fewer than two retained pulse-on samples")
    slow_off = float(np.mean(y[pre]))
    t_mid = 0.5 * (t_on + t_off)
    # centred at the midpoint for conditioning
    tc = t[on] - t_mid - filter_lag
    mid, slope = linear_least_squares(np.column_stack([np.ones_like(tc), tc]), y[on])
    after = mid + slope * (t_on - t_mid)
    n_fast = after - slow_off
    return Decomposition(
        n_fast=float(n_fast),
        n_slow_off=slow_off,
        n_slow_on=float(mid - after),
        t_on=float(t_on),
        t_off=float(t_off),
        after_laser=float(after),
        midpulse=float(mid),
        slope=float(slope),
        diagnostics={"n_baseline": int(np.count_nonzero(pre)), "n_on": int(np.count_nonzero(on))},
    )


# ------------------------------------------------------------------- decays


@dataclass
class MultiExpFit:
    amplitudes: np.ndarray
    taus: np.ndarray
    offset: float
    residual_rms: float
    covariance: Optional[np.ndarray] = None
    tau_errors: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, t):
        return multiexponential(t, self.amplitudes, self.taus, self.offset)


def multiexponential(t, amplitudes, taus, offset=0.0):
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, float(offset))
    for a, tau in zip(amplitudes, taus):
        out = out + a * np.exp(-t / tau)
    return out


def _tau_seeds(span, dt, k, n_starts):
    lo = max(3 * dt, span * 1e-4)
    hi = span
    base = np.geomspace(lo, hi, k + 2)[1:-1] if k > 1 else np.array([np.sqrt(lo * hi)])
    shifts = np.geomspace(0.25, 4.0, n_starts)
    return [np.clip(base * f, lo, 3 * hi) for f in shifts]


def fit_multiexponential(times, values, k, n_starts=5, tol=None):
    """Fit ``sum_j a_j exp(-t/tau_j) + offset`` with ``k`` exponentials.

    Each start fixes log-spaced taus, solves the amplitudes and offset
    linearly, then refines everything with Levenberg-Marquardt on
    ``(a, log tau, offset)``. The lowest-residual converged start wins.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise InvalidInputError("times and values must be 1-D of equal length")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if n_starts < 1:
        raise InvalidInputError("n_starts must be >= 1")
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("times must be strictly increasing")
    if t.size < 4 * k + 2:
        raise InsufficientDataError(f"need at least {4 * k + 2} samples for k={k}")
    t0 = t[0]
    tt = t - t0
    yscale = float(np.max(np.abs(y))) or 1.0
    yy = y / yscale
    span = tt[-1]
    dt = float(np.min(np.diff(tt)))

    def basis(log_tau):
        return np.exp(-tt[:, None] / np.exp(log_tau)[None, :])

    def residual(x):
        return basis(x[k:2 * k]) @ x[:k] + x[-1] - yy

    def jacobian(x):
        E = basis(x[k:2 * k])
        tau = np.exp(x[k:2 * k])
        d_log = E * x[:k][None, :] * (tt[:, None] / tau[None, :])
        return np.column_stack([E, d_log, np.ones_like(tt)])

    tol = tol or Tolerances(max_iter=500)
    # keep trial time constants where exp() stays finite
    lo = np.concatenate([np.full(k, -np.inf), np.full(k, np.log(dt * 1e-2)), [-np.inf]])
    hi = np.concatenate([np.full(k, np.inf), np.full(k, np.log(span * 1e4)), [np.inf]])
    best = None
    best_any = np.inf
    for seeds in _tau_seeds(span, dt, k, n_starts):
        log_tau = np.log(seeds)
        try:
            lin = linear_least_squares(np.column_stack([basis(log_tau), np.ones_like(tt)]), yy)
        except DegenerateDesignError:
            continue
        x0 = np.concatenate([lin[:k], log_tau, lin[k:]])
        try:
            res = nonlinear_least_squares(FitProblem(residual, 2 * k + 1, jacobian, (lo, hi)), x0, tol)
        except FitFailureError as exc:
            if exc.best_residual is not None:
                best_any = min(best_any, exc.best_residual)
            continue
        best_any = min(best_any, res.residual_rms)
        if res.converged and (best is None or res.residual_rms < best.residual_rms):
            best = res
    if best is None:
        raise FitFailureError("multi-exponential fit did not converge from any start",
                              best_residual=best_any * yscale if np.isfinite(best_any) else None)
    x = best.parameters
    taus = np.exp(x[k:2 * k])
    order = np.argsort(taus)
    taus = taus[order]
    amps = x[:k][order] * yscale * np.exp(t0 / taus)
    offset = float(x[-1] * yscale)
    diagnostics = {"iterations": best.iterations, "condition": best.condition, "warnings": []}
    if k > 1 and np.any(taus[1:] / taus[:-1] < 1.05):
        diagnostics["warnings"].append("time constants within 5%: model order may exceed what the data identify")
    cov = tau_err = None
    if best.covariance is not None:
        perm = np.concatenate([order, k + order, [2 * k]])
        cov = best.covariance[np.ix_(perm, perm)]
        # delta method: sigma_tau = tau * sigma_log_tau
        tau_err = taus * np.sqrt(np.clip(np.diag(cov)[k:2 * k], 0, None))
    return MultiExpFit(amps, taus, offset, best.residual_rms * yscale, cov, tau_err, diagnostics)


# ---------------------------------------------------------------- power law


@dataclass
class PowerLawFit:
    prefactor: float
    exponent: float
    r_squared: float

    def __call__(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent


def fit_powerlaw(x, y):
    """``y = prefactor * x**exponent`` by linear regression in log-log space."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("x and y must be 1-D of equal length")
    if x.size < 3:
        raise InsufficientDataError("power-law fit needs at least 3 points")
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise InvalidInputError("power-law fit needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    xm = lx.mean()
    intercept, slope = linear_least_squares(np.column_stack([np.ones_like(lx), lx - xm]), ly)
    resid = ly - (intercept + slope * (lx - xm))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(float(np.exp(intercept - slope * xm)), float(slope), r2)
