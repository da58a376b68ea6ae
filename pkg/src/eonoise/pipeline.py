"""Stage runner: simulate, calibrate, fit, extract, decompose, and report.

Each stage reads its inputs from and writes its outputs to one output
directory. Every file carries the configuration hash; a stage refuses to read
an artifact written under a different hash unless ``override_hash`` is set.
"""

import json
import math
from pathlib import Path

import numpy as np

from .chain import CalibrationSweep, ChainCalibration, fit_calibration
from .config import ExperimentConfig, dbm_to_watt
from .datasets import Dataset, load_dataset, read_header, save_dataset
from .errors import DependencyError, HashMismatchError, InvalidInputError
from .extraction import (
    NoiseTrace,
    decompose_nidiff,
    detect_drive_edges,
    extract_nidiff_trace,
    fit_multiexponential,
    fit_powerlaw,
    fit_resonance_trace,
)
from .heat import (
    OpticalInterface,
    equilibrium_temperature,
    heat_dissipated,
    heat_reduction_factor,
    occupancy_powerlaw_consistency,
)
from .simulate import (
    CoherentHeatMap,
    NoiseHeatMap,
    ResonatorTrajectory,
    bath_trajectory,
    resonator_trajectory,
    synthesize_calibration_sweep,
    synthesize_coherent_heatmap,
    synthesize_heatmap,
)

__all__ = ["STAGES", "DEPENDENCIES", "run_pipeline", "Pipeline"]

STAGES = ("simulate", "calibrate", "fit-resonance", "extract", "decompose", "fit-decay", "fit-powerlaw",
          "heat-budget")

DEPENDENCIES = {
    "simulate": (),
    "calibrate": ("simulate",),
    "fit-resonance": ("simulate",),
    "extract": ("simulate", "calibrate", "fit-resonance"),
    "decompose": ("extract", "fit-resonance"),
    "fit-decay": ("extract", "fit-resonance"),
    "fit-powerlaw": ("decompose",),
    "heat-budget": (),
}

# json artifacts written by each stage; summary.json collects them
_RESULT_FILES = {
    "calibrate": "calibration.json",
    "decompose": "decomposition.json",
    "fit-decay": "decay_fit.json",
    "fit-powerlaw": "powerlaw.json",
    "heat-budget": "heat_budget.json",
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class Pipeline:
    """Runs stages against one output directory."""

    def __init__(self, config, out_dir, override_hash=False):
        if not isinstance(config, ExperimentConfig):
            config = ExperimentConfig(config)
        self.config = config
        self.out = Path(out_dir)
        self.override_hash = bool(override_hash)
        self.hash = config.hash
        self.runs = config.runs()

    # -- io helpers ----------------------------------------------------
    def path(self, *parts):
        return self.out.joinpath(*parts)

    def _header(self, **extra):
        return {"config_hash": self.hash, "seed": self.config.seed, **extra}

    def _save(self, rel, kind, axes, fields, units, **extra):
        ds = Dataset(kind, axes, fields, units, self._header(**extra))
        return save_dataset(self.path(rel), ds)

    def _check_hash(self, found, where):
        if found != self.hash and not self.override_hash:
            raise HashMismatchError(
                f"{where} was written under config hash {found!r}, current is {self.hash!r}; "
                "rerun the producing stage or pass --override-hash"
            )

    def _require(self, rel, stage, needed_by):
        p = self.path(rel)
        if not p.exists():
            raise DependencyError(
                f"stage '{needed_by}' needs {rel}, produced by stage '{stage}'; run '{stage}' first", stage=stage
            )
        return p

    def _load(self, rel, stage, needed_by):
        p = self._require(rel, stage, needed_by)
        header = read_header(p)
        self._check_hash(header.get("config_hash"), rel)
        return load_dataset(p)

    def _write_json(self, rel, payload):
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        body = _jsonable({"config_hash": self.hash, "seed": self.config.seed, **payload})
        p.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
        return p

    def _read_json(self, rel, stage, needed_by):
        p = self._require(rel, stage, needed_by)
        data = json.loads(p.read_text())
        self._check_hash(data.get("config_hash"), rel)
        return data

    def _plot(self, name, x, y, model, x_unit, y_unit):
        return self._save(f"plots/{name}.csv", "plot", {"x": np.asarray(x, dtype=float)},
                          {"y": np.asarray(y, dtype=float), "model": np.asarray(model, dtype=float)},
                          {"x": x_unit, "y": y_unit, "model": y_unit})

    # -- stages ----------------------------------------------------------
    def simulate(self):
        cfg = self.config
        m = cfg.bath_model()
        rr = cfg.resonator_response()
        cal = cfg.true_calibration()
        noise = cfg.data["noise"]
        for name, run in self.runs.items():
            hm = synthesize_heatmap(run.pulse, m, rr, cal, run.times, run.frequencies, run.t_c,
                                    noise_sigma=float(noise["power_sigma_w"]), seed=run.seed,
                                    n_e_fraction=cfg.n_e_fraction)
            ch = synthesize_coherent_heatmap(run.pulse, m, rr, run.times, run.frequencies,
                                             noise_sigma=float(noise["coherent_sigma"]), seed=run.seed,
                                             t_c=run.coherent_t_c)
            axes = {"time": hm.times, "frequency": hm.frequencies}
            self._save(f"sim/{name}_noise.csv", "noise_heatmap", axes,
                       {"power_on": hm.power_on, "power_off": hm.power_off},
                       {"time": "s", "frequency": "rad/s", "power_on": "W", "power_off": "W"}, run=name)
            self._save(f"sim/{name}_coherent.csv", "coherent_heatmap", axes, {"s11": ch.s11},
                       {"time": "s", "frequency": "rad/s", "s11": "1"}, run=name)
            bath = bath_trajectory(run.pulse, m, run.times)
            res = resonator_trajectory(run.times, bath.n_fast, rr)
            self._save(f"sim/{name}_truth.csv", "truth", {"time": run.times},
                       {"n_fast": bath.n_fast, "n_slow": bath.n_slow_total, "n_bg": bath.n_bg,
                        "n_i_diff": bath.n_i_diff, "omega0": res.omega0, "kappa_i": res.kappa_i,
                        "kappa_e": res.kappa_e},
                       {"time": "s", "omega0": "rad/s", "kappa_i": "rad/s", "kappa_e": "rad/s"}, run=name)
        sweep = synthesize_calibration_sweep(cal, cfg.calibration_temperatures(),
                                             noise_sigma=float(cfg.data["calibration"]["power_sigma_w"]),
                                             seed=cfg.seed)
        self._save("sim/vts_sweep.csv", "calibration_sweep", {"temperature": sweep.temperatures},
                   {"power": sweep.powers}, {"temperature": "K", "power": "W"})
        return {"runs": sorted(self.runs)}

    def calibrate(self):
        ds = self._load("sim/vts_sweep.csv", "simulate", "calibrate")
        sweep = CalibrationSweep(ds.axes["temperature"], ds.fields["power"])
        true = self.config.true_calibration()
        cal = fit_calibration(sweep, true.bw, true.omega_s, true.omega_i)
        d = cal.diagnostics
        x = sweep.temperatures
        model = sweep.powers - d["residuals"]
        self._plot("calibration", x, sweep.powers, model, "K", "W")
        result = {
            "g_sys": cal.g_sys,
            "n_sys": cal.n_sys,
            "bw": cal.bw,
            "omega_s": cal.omega_s,
            "omega_i": cal.omega_i,
            "diagnostics": {k: v for k, v in d.items() if k != "residuals"},
            "configured": {"g_sys": true.g_sys, "n_sys": true.n_sys, "attenuation_l": true.attenuation_l},
        }
        self._write_json("calibration.json", result)
        return result

    def fit_resonance(self):
        for name in self.runs:
            ds = self._load(f"sim/{name}_coherent.csv", "simulate", "fit-resonance")
            ch = CoherentHeatMap(ds.axes["time"], ds.axes["frequency"], ds.fields["s11"])
            traj = fit_resonance_trace(ch)
            self._save(f"resonance/{name}.csv", "resonance_trace", {"time": traj.times},
                       {"omega0": traj.omega0, "kappa_i": traj.kappa_i, "kappa_e": traj.kappa_e},
                       {"time": "s", "omega0": "rad/s", "kappa_i": "rad/s", "kappa_e": "rad/s"}, run=name)
        return {"runs": sorted(self.runs)}

    def _resonance(self, name, needed_by):
        ds = self._load(f"resonance/{name}.csv", "fit-resonance", needed_by)
        f = ds.fields
        return ResonatorTrajectory(ds.axes["time"], f["omega0"], f["kappa_i"], f["kappa_e"])

    def _calibration(self, needed_by):
        c = self._read_json("calibration.json", "calibrate", needed_by)
        return ChainCalibration(c["g_sys"], c["n_sys"], c["bw"], c["omega_s"], c["omega_i"])

    def extract(self):
        for name in self.runs:
            self._require(f"sim/{name}_noise.csv", "simulate", "extract")
        cal = self._calibration("extract")
        for name in self.runs:
            ds = self._load(f"sim/{name}_noise.csv", "simulate", "extract")
            hm = NoiseHeatMap(ds.axes["time"], ds.axes["frequency"], ds.fields["power_on"], ds.fields["power_off"])
            res = self._resonance(name, "extract")
            trace = extract_nidiff_trace(hm, cal, res)
            self._save(f"traces/{name}.csv", "noise_trace", {"time": trace.times},
                       {"n_bg": trace.n_bg, "n_i_diff": trace.n_i_diff, "residual_rms": trace.residual_rms},
                       {"time": "s", "n_bg": "quanta", "n_i_diff": "quanta", "residual_rms": "quanta"}, run=name)
        return {"runs": sorted(self.runs)}

    def _trace(self, name, needed_by):
        ds = self._load(f"traces/{name}.csv", "extract", needed_by)
        f = ds.fields
        return NoiseTrace(ds.axes["time"], f["n_bg"], f["n_i_diff"], f["residual_rms"])

    def decompose(self):
        a = self.config.data["analysis"]
        out = {}
        for name, run in self.runs.items():
            if name == "decay":
                continue
            trace = self._trace(name, "decompose")
            res = self._resonance(name, "decompose")
            t_on, t_off = detect_drive_edges(res.times, res.omega0)
            excl = self.config.exclusion_window(run.t_c)
            d = decompose_nidiff(trace.times, trace.n_i_diff, t_on, t_off, excl,
                                 baseline_window=a["baseline_window"],
                                 filter_lag=run.t_c if a["filter_lag"] else 0.0)
            t = trace.times
            model = np.full(t.shape, np.nan)
            before = t < t_on
            during = (t >= t_on) & (t <= t_off)
            model[before] = d.n_slow_off
            model[during] = d.midpulse + d.slope * (t[during] - 0.5 * (t_on + t_off))
            self._plot(f"decompose_{name}", t, trace.n_i_diff, model, "s", "quanta")
            out[name] = {
                "n_fast": d.n_fast,
                "n_slow_off": d.n_slow_off,
                "n_slow_on": d.n_slow_on,
                "after_laser": d.after_laser,
                "midpulse": d.midpulse,
                "t_on": d.t_on,
                "t_off": d.t_off,
                "n_bg": float(np.median(trace.n_bg)),
                "exclusion_window": excl,
                "peak_power": run.pulse.peak_power,
                "average_power": run.pulse.nominal_average_power,
                "duty": run.pulse.duty,
                "diagnostics": d.diagnostics,
            }
        result = {"runs": out}
        self._write_json("decomposition.json", result)
        return result

    def fit_decay(self):
        if "decay" not in self.runs:
            raise InvalidInputError("configuration has no decay run")
        run = self.runs["decay"]
        trace = self._trace("decay", "fit-decay")
        res = self._resonance("decay", "fit-decay")
        _, t_off = detect_drive_edges(res.times, res.omega0)
        excl = self.config.exclusion_window(run.t_c)
        keep = trace.times >= t_off + excl
        t = trace.times[keep] - t_off
        y = trace.n_i_diff[keep]
        a = self.config.data["analysis"]
        fit = fit_multiexponential(t, y, int(a["decay_k"]), n_starts=int(a["decay_starts"]))
        self._plot("decay", t, y, fit(t), "s", "quanta")
        result = {
            "taus": fit.taus,
            "amplitudes": fit.amplitudes,
            "offset": fit.offset,
            "tau_errors": fit.tau_errors,
            "residual_rms": fit.residual_rms,
            "t_off": t_off,
            "exclusion_window": excl,
            "diagnostics": fit.diagnostics,
        }
        self._write_json("decay_fit.json", result)
        return result

    def fit_powerlaw(self):
        dec = self._read_json("decomposition.json", "decompose", "fit-powerlaw")["runs"]
        names = sorted(n for n in dec if n.startswith("sweep_"))
        if len(names) < 3:
            raise InvalidInputError("power-law fits need at least 3 sweep points in the configuration")
        rows = [dec[n] for n in names]
        p_peak = np.array([r["peak_power"] for r in rows])
        p_avg = np.array([r["average_power"] for r in rows])
        series = {
            "n_bg": (p_avg, np.array([r["n_bg"] for r in rows]), "average_power"),
            "n_fast": (p_peak, np.array([r["n_fast"] for r in rows]), "peak_power"),
            "n_slow_off": (p_avg, np.array([r["n_slow_off"] for r in rows]), "average_power"),
        }
        result = {}
        for key, (x, y, against) in series.items():
            fit = fit_powerlaw(x, y)
            self._plot(f"powerlaw_{key}", x, y, fit(x), "W", "quanta")
            result[key] = {"exponent": fit.exponent, "prefactor": fit.prefactor, "r_squared": fit.r_squared,
                           "against": against, "n_points": int(x.size)}
        self._write_json("powerlaw.json", result)
        return result

    def heat_budget(self):
        cfg = self.config
        h = cfg.data["heat_budget"]
        before, after = cfg.optical_interfaces()
        link = cfg.thermal_link()
        q_before, q_after = heat_dissipated(before), heat_dissipated(after)

        def factor(t2):
            b = OpticalInterface(before.eta_in, before.eta_out, t2, before.p_t)
            a = OpticalInterface(after.eta_in, after.eta_out, t2, after.p_t)
            return heat_reduction_factor(b, a)

        probes = dbm_to_watt(h["fast_probe_dbm"])
        occ = occupancy_powerlaw_consistency(cfg.bath_model().fast_exponent, float(dbm_to_watt(h["fast_anchor_dbm"])),
                                             float(h["fast_anchor_occupancy"]), probes)
        result = {
            "heat_before": q_before,
            "heat_after": q_after,
            "reduction_factor": heat_reduction_factor(before, after),
            "reduction_factor_t0": factor(0.0),
            "reduction_factor_t1": factor(1.0),
            "temperature_before": equilibrium_temperature(q_before, link),
            "temperature_after": equilibrium_temperature(q_after, link),
            "fast_occupancy_probe_powers": probes,
            "fast_occupancy": occ,
        }
        self._write_json("heat_budget.json", result)
        return result

    # -- driver ----------------------------------------------------------
    def run(self, stages=None):
        requested = list(STAGES) if stages is None else list(stages)
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise InvalidInputError(f"unknown stage(s): {', '.join(unknown)}; choose from {', '.join(STAGES)}")
        self.out.mkdir(parents=True, exist_ok=True)
        ordered = [s for s in STAGES if s in requested]
        results = {}
        for stage in ordered:
            results[stage] = getattr(self, stage.replace("-", "_"))()
        self.write_summary(ordered)
        return results

    def write_summary(self, stages_run):
        summary = {"stages_run": list(stages_run)}
        for stage, rel in _RESULT_FILES.items():
            p = self.path(rel)
            if not p.exists():
                continue
            data = json.loads(p.read_text())
            if data.get("config_hash") != self.hash and not self.override_hash:
                continue
            data.pop("config_hash", None)
            data.pop("seed", None)
            summary[stage] = data
        return self._write_json("summary.json", summary)


def run_pipeline(config, stages=None, out_dir="eonoise-out", override_hash=False):
    """Run ``stages`` (default: all) in dependency order; returns the per-stage results."""
    return Pipeline(config, out_dir, override_hash).run(stages)
