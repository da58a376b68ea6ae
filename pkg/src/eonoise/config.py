"""Experiment configuration.

The configuration file is the only place user-facing units appear: optical
powers in dBm and frequencies in Hz. Everything handed to the inner modules
is SI-linear (W, rad/s). ``dbm_to_watt`` and ``hz_to_rad`` are the only
conversion points.
"""

import copy
import hashlib
import json
from pathlib import Path

import numpy as np

from .chain import ChainCalibration
from .errors import ConfigurationError, EonoiseError
from .heat import OpticalInterface, ThermalLink
from .physics import ResonatorParams
from .simulate import BathModel, PulseTrain, ResonatorResponse

__all__ = [
    "DEFAULT_CONFIG",
    "ExperimentConfig",
    "RunSpec",
    "dbm_to_watt",
    "watt_to_dbm",
    "hz_to_rad",
    "load_config",
    "config_hash",
]

TWO_PI = 2 * np.pi


def dbm_to_watt(dbm):
    return 1e-3 * 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float) / 1e-3)


def hz_to_rad(f):
    return TWO_PI * np.asarray(f, dtype=float)


DEFAULT_CONFIG = {
    "seed": 0,
    "pulse": {"peak_power_dbm": 5.0, "width": 5e-6, "period": 1e-3, "edge_time": 35e-9, "delay": 5e-6},
    "bath": {
        "fast_gain": 0.17782794100389229,  # n_fast = 1 at 10 mW
        "fast_exponent": 0.75,
        "fast_tau": 20e-9,
        "slow_channels": [[1.0, 33e-6], [12.0, 0.6e-3], [50.0, 6e-3], [30.0, 1.0]],
        "slow_exponent": 0.3,
        "bg_gain": 16.5,
        "bg_exponent": 0.82,
        "bg_tau": 0.1,
    },
    "resonator": {
        "f0_hz": 6.587e9,
        "kappa_i_hz": 0.3e6,
        "kappa_e_hz": 0.5e6,
        "shift_hz_per_quantum": -3.557e6,  # -1.5 MHz at the 5 dBm fast occupancy
        "broadening_hz_per_quantum": 1.186e6,
    },
    "chain": {
        "g_sys": 1e9,
        "n_sys": 5.0,
        "bw_hz": 1e6,
        "f_signal_hz": 6.587e9,
        "f_idler_hz": 7.4e9,
        "attenuation_l": 1.0,
        "n_e_fraction": 0.5,
    },
    "grid": {"t_span": 16e-6, "dt": 40e-9, "f_min_offset_hz": -8e6, "f_max_offset_hz": 4e6, "df_hz": 0.1e6},
    "lockin": {"t_c": 0.2e-6, "coherent_t_c": None},
    "noise": {"power_sigma_w": 1e-11, "coherent_sigma": 1e-3},
    "calibration": {"temperatures_k": [0.06, 0.1, 0.2, 0.4, 0.8], "power_sigma_w": 1e-11},
    "analysis": {
        "exclusion_tc": 5.0,
        "baseline_window": None,
        "filter_lag": False,
        "decay_k": 3,
        "decay_starts": 5,
    },
    "decay": {
        "pulse": {"peak_power_dbm": 0.0, "width": 10e-6, "period": 10e-3, "edge_time": 35e-9, "delay": 20e-6},
        "t_span": 9.05e-3,
        "dt": 1e-6,
        "t_c": 5e-6,
        "f_min_offset_hz": -4e6,
        "f_max_offset_hz": 4e6,
        "df_hz": 0.2e6,
    },
    "sweep": {
        "peak_powers_dbm": [-9.0, -7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0, 9.0, 11.0],
        "width": 5e-6,
        "period": 1e-3,
        "delay": 5e-6,
    },
    "heat_budget": {
        "p_t_dbm": 0.0,
        "eta_in": 0.5,
        "eta_out": 0.5,
        "improved_eta_in": 0.8,
        "improved_eta_out": 0.8,
        "t_opt_sq": 0.0,
        "link": {"conductivity_exponent": 3.0, "reference_power": 1e-3, "reference_temperature": 0.5,
                 "base_temperature": 0.05},
        "fast_anchor_dbm": 10.0,
        "fast_anchor_occupancy": 1.0,
        "fast_probe_dbm": [-5.228787452803376, 10.0],  # 0.3 mW and 10 mW
    },
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def config_hash(data):
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class RunSpec:
    """One simulated acquisition: pulse train plus time/frequency grid and lock-in constants."""

    def __init__(self, name, pulse, times, frequencies, t_c, coherent_t_c, seed):
        self.name = name
        self.pulse = pulse
        self.times = times
        self.frequencies = frequencies
        self.t_c = t_c
        self.coherent_t_c = coherent_t_c
        self.seed = seed

    def __repr__(self):
        return f"RunSpec({self.name!r}, peak={self.pulse.peak_power:.3g} W, n_t={self.times.size})"


class ExperimentConfig:
    """Validated configuration; builds the SI-unit model objects on demand."""

    def __init__(self, data=None):
        self.data = _merge(DEFAULT_CONFIG, data or {})
        try:
            self._validate()
        except EonoiseError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from exc

    @classmethod
    def from_file(cls, path):
        return load_config(path)

    def with_seed(self, seed):
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return ExperimentConfig(data)

    @property
    def seed(self):
        return int(self.data["seed"])

    @property
    def hash(self):
        return config_hash(self.data)

    def to_dict(self):
        return copy.deepcopy(self.data)

    # -- model objects -------------------------------------------------
    def _pulse(self, d):
        return PulseTrain(
            peak_power=float(dbm_to_watt(d["peak_power_dbm"])),
            width=float(d["width"]),
            period=float(d["period"]),
            edge_time=float(d.get("edge_time", self.data["pulse"]["edge_time"])),
            delay=float(d.get("delay", 0.0)),
        )

    def pulse_train(self):
        return self._pulse(self.data["pulse"])

    def bath_model(self):
        b = self.data["bath"]
        return BathModel(
            fast_gain=float(b["fast_gain"]),
            fast_exponent=float(b["fast_exponent"]),
            fast_tau=float(b["fast_tau"]),
            slow_channels=[(float(g), float(t)) for g, t in b["slow_channels"]],
            slow_exponent=float(b["slow_exponent"]),
            bg_gain=float(b["bg_gain"]),
            bg_exponent=float(b["bg_exponent"]),
            bg_tau=float(b["bg_tau"]),
        )

    def resonator_response(self):
        r = self.data["resonator"]
        base = ResonatorParams(float(hz_to_rad(r["f0_hz"])), float(hz_to_rad(r["kappa_i_hz"])),
                               float(hz_to_rad(r["kappa_e_hz"])))
        return ResonatorResponse(base, float(hz_to_rad(r["shift_hz_per_quantum"])),
                                 float(hz_to_rad(r["broadening_hz_per_quantum"])))

    def true_calibration(self):
        c = self.data["chain"]
        return ChainCalibration(
            g_sys=float(c["g_sys"]),
            n_sys=float(c["n_sys"]),
            bw=float(c["bw_hz"]),
            omega_s=float(hz_to_rad(c["f_signal_hz"])),
            omega_i=float(hz_to_rad(c["f_idler_hz"])),
            attenuation_l=float(c["attenuation_l"]),
        )

    @property
    def n_e_fraction(self):
        return float(self.data["chain"]["n_e_fraction"])

    def _frequencies(self, lo, hi, step):
        f0 = self.data["resonator"]["f0_hz"]
        n = int(round((hi - lo) / step)) + 1
        return hz_to_rad(f0 + lo + step * np.arange(n))

    @staticmethod
    def _times(span, dt):
        n = int(np.floor(span / dt + 1e-9)) + 1
        return dt * np.arange(n)

    def exclusion_window(self, t_c):
        return float(self.data["analysis"]["exclusion_tc"]) * t_c

    def runs(self):
        """All acquisitions the simulate stage produces, keyed by run name."""
        g = self.data["grid"]
        lk = self.data["lockin"]
        freqs = self._frequencies(g["f_min_offset_hz"], g["f_max_offset_hz"], g["df_hz"])
        times = self._times(g["t_span"], g["dt"])
        seed = self.seed
        runs = {"main": RunSpec("main", self.pulse_train(), times, freqs, lk["t_c"], lk["coherent_t_c"], seed)}
        d = self.data.get("decay")
        if d:
            runs["decay"] = RunSpec(
                "decay", self._pulse(d["pulse"]), self._times(d["t_span"], d["dt"]),
                self._frequencies(d["f_min_offset_hz"], d["f_max_offset_hz"], d["df_hz"]),
                d["t_c"], lk["coherent_t_c"], seed + 1,
            )
        s = self.data.get("sweep")
        if s:
            for i, dbm in enumerate(s["peak_powers_dbm"]):
                pulse = self._pulse({"peak_power_dbm": dbm, "width": s["width"], "period": s["period"],
                                     "delay": s["delay"]})
                name = f"sweep_{i:02d}"
                runs[name] = RunSpec(name, pulse, times, freqs, lk["t_c"], lk["coherent_t_c"], seed + 100 + i)
        return runs

    def calibration_temperatures(self):
        return np.asarray(self.data["calibration"]["temperatures_k"], dtype=float)

    def optical_interfaces(self):
        h = self.data["heat_budget"]
        p_t = float(dbm_to_watt(h["p_t_dbm"]))
        before = OpticalInterface(h["eta_in"], h["eta_out"], h["t_opt_sq"], p_t)
        after = OpticalInterface(h["improved_eta_in"], h["improved_eta_out"], h["t_opt_sq"], p_t)
        return before, after

    def thermal_link(self):
        return ThermalLink(**{k: float(v) for k, v in self.data["heat_budget"]["link"].items()})

    def _validate(self):
        # building every object runs each module's invariant checks
        self.pulse_train()
        self.bath_model()
        self.resonator_response()
        self.true_calibration()
        if not 0 <= self.n_e_fraction <= 1:
            raise ConfigurationError("chain.n_e_fraction must lie in [0, 1]")
        for run in self.runs().values():
            if run.times.size < 2 or run.frequencies.size < 8:
                raise ConfigurationError(f"run '{run.name}' grid is too small")
            if run.t_c is None or not run.t_c > 0:
                raise ConfigurationError(f"run '{run.name}' needs a positive lock-in t_c")
            dt = run.times[1] - run.times[0]
            if dt > run.t_c / 5 * (1 + 1e-9):
                raise ConfigurationError(f"run '{run.name}': dt must not exceed t_c/5")
        if len(self.calibration_temperatures()) < 2:
            raise ConfigurationError("calibration needs at least two temperatures")
        self.optical_interfaces()
        self.thermal_link()
        if int(self.data["analysis"]["decay_k"]) < 1:
            raise ConfigurationError("analysis.decay_k must be >= 1")


def load_config(path):
    """Read a JSON or YAML configuration file and merge it over the defaults."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return ExperimentConfig(data)
