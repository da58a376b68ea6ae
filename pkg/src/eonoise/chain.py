"""Amplification-chain model, VTS calibration fit and on/off excess-noise extraction."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesignError, DegenerateSweepError, FitFailureError, InvalidInputError
from .numfit import linear_least_squares
from .physics import HBAR, bose_einstein_occupancy

__all__ = [
    "N_QUANTUM",
    "ChainCalibration",
    "CalibrationSweep",
    "ExcessNoiseSpectrum",
    "chain_output_power",
    "device_output_power",
    "calibration_regressor",
    "fit_calibration",
    "compute_sdev",
    "input_attenuation",
]

N_QUANTUM = 0.5


@dataclass(frozen=True)
class ChainCalibration:
    """Output-chain constants referred to the VTS plane.

    ``attenuation_l`` is the power transmission between the VTS and the
    device. Extraction assumes it is 1; the simulator uses the stored value
    as the true loss.
    """

    g_sys: float
    n_sys: float
    bw: float
    omega_s: float
    omega_i: float
    attenuation_l: float = 1.0
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if not self.g_sys > 0:
            raise InvalidInputError(f"g_sys must be > 0, got {self.g_sys}")
        if self.n_sys < 0:
            raise InvalidInputError(f"n_sys must be >= 0, got {self.n_sys}")
        if not self.bw > 0:
            raise InvalidInputError("bw must be > 0")
        if not (self.omega_s > 0 and self.omega_i > 0):
            raise InvalidInputError("signal and idler frequencies must be > 0")
        if not 0 < self.attenuation_l <= 1:
            raise InvalidInputError("attenuation_l must lie in (0, 1]")

    @property
    def quantum_power(self):
        """Output power of one quantum at the signal frequency, ``BW*G_sys*hbar*omega_s``."""
        return self.bw * self.g_sys * HBAR * self.omega_s


@dataclass(frozen=True)
class CalibrationSweep:
    temperatures: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.temperatures, dtype=float)
        P = np.asarray(self.powers, dtype=float)
        if T.ndim != 1 or P.shape != T.shape:
            raise InvalidInputError("temperatures and powers must be 1-D and of equal length")
        if T.size < 2:
            raise InvalidInputError("a calibration sweep needs at least two points")
        if np.any(~(T > 0)):
            raise InvalidInputError("VTS temperatures must be strictly positive")
        object.__setattr__(self, "temperatures", T)
        object.__setattr__(self, "powers", P)


@dataclass(frozen=True)
class ExcessNoiseSpectrum:
    frequencies: np.ndarray
    s_dev: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float)
        s = np.asarray(self.s_dev, dtype=float)
        if w.ndim != 1 or s.shape[-1:] != w.shape:
            raise InvalidInputError("s_dev last axis must match the frequency axis")
        if w.size > 1 and np.any(np.diff(w) <= 0):
            raise InvalidInputError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "s_dev", s)


def chain_output_power(n_vts_s, n_vts_i, cal):
    """Output noise power for thermal occupancies at the signal and idler frequencies.

    Large-gain limit: both sidebands enter with the same gain.
    """
    n_s = np.asarray(n_vts_s, dtype=float)
    n_i = np.asarray(n_vts_i, dtype=float)
    if np.any(n_s < 0) or np.any(n_i < 0):
        raise InvalidInputError("occupancies must be non-negative")
    ws, wi = cal.omega_s, cal.omega_i
    out = cal.bw * cal.g_sys * HBAR * (n_s * ws + n_i * wi + (N_QUANTUM + cal.n_sys) * ws)
    return out[()] if out.ndim == 0 else out


def device_output_power(s_out, delta_n_sys, cal):
    """Output power with the device in place: chain floor, downstream excess and device noise.

    Device noise sees gain ``G_sys / L``: the calibration is referred to the
    VTS, whose signal crosses the loss before reaching the device plane.
    """
    s_out = np.asarray(s_out, dtype=float)
    floor = cal.quantum_power * (N_QUANTUM + cal.n_sys + np.asarray(delta_n_sys, dtype=float))
    return floor + cal.quantum_power / cal.attenuation_l * s_out


def calibration_regressor(temperatures, omega_s, omega_i):
    """``n_BE(omega_s, T) + (omega_i/omega_s) * n_BE(omega_i, T)`` per temperature."""
    T = np.asarray(temperatures, dtype=float)
    fs = omega_s / (2 * np.pi)
    fi = omega_i / (2 * np.pi)
    return bose_einstein_occupancy(fs, T) + (omega_i / omega_s) * bose_einstein_occupancy(fi, T)


def fit_calibration(sweep, bw, omega_s, omega_i):
    """Fit gain and added noise from a VTS temperature sweep.

    Solves ``P = a*x(T) + c`` in closed form, then
    ``G_sys = a / (BW*hbar*omega_s)`` and ``n_sys = c/a - 1/2``.
    """
    x = calibration_regressor(sweep.temperatures, omega_s, omega_i)
    design = np.column_stack([x, np.ones_like(x)])
    # normalise powers so the solve is well scaled for W-level inputs
    pscale = float(np.max(np.abs(sweep.powers))) or 1.0
    try:
        a, c = linear_least_squares(design, sweep.powers / pscale)
    except DegenerateDesignError as exc:
        raise DegenerateSweepError("calibration sweep does not vary the VTS occupancy", rank=exc.rank) from exc
    a *= pscale
    c *= pscale
    if not a > 0:
        raise FitFailureError(f"fitted gain is not positive (slope {a:.3g} W/quantum)")
    resid = sweep.powers - (a * x + c)
    g_sys = a / (bw * HBAR * omega_s)
    n_sys = c / a - N_QUANTUM
    diag = {
        "residual_rms": float(np.sqrt(np.mean(resid**2))),
        "residuals": resid,
        "n_points": int(x.size),
        "slope": float(a),
        "intercept": float(c),
    }
    if n_sys < 0:
        diag["negative_n_sys"] = float(n_sys)
        n_sys_out = 0.0
    else:
        n_sys_out = float(n_sys)
    return ChainCalibration(g_sys=float(g_sys), n_sys=n_sys_out, bw=bw, omega_s=omega_s,
                            omega_i=omega_i, diagnostics=diag)


def compute_sdev(p_on, p_off, cal, frequencies):
    """Excess device noise in quanta, ``(P_on - P_off) / (BW*G_sys*hbar*omega_s)``.

    ``p_on`` / ``p_off`` may be 1-D spectra or (time, frequency) grids; the
    last axis indexes ``frequencies``. Takes ``L = 1``.
    """
    p_on = np.asarray(p_on, dtype=float)
    p_off = np.asarray(p_off, dtype=float)
    if p_on.shape != p_off.shape:
        raise InvalidInputError(f"on/off spectra differ in shape: {p_on.shape} vs {p_off.shape}")
    return ExcessNoiseSpectrum(frequencies, (p_on - p_off) / cal.quantum_power)


def input_attenuation(total_transmission, g_sys):
    """Input-line transmission from the total setup transmission and the output gain (linear)."""
    if not (total_transmission > 0 and g_sys > 0):
        raise InvalidInputError("transmission and gain must be positive")
    return total_transmission / g_sys
