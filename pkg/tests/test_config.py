import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eonoise.config import (
    DEFAULT_CONFIG,
    ExperimentConfig,
    config_hash,
    dbm_to_watt,
    hz_to_rad,
    load_config,
    watt_to_dbm,
)
from eonoise.errors import ConfigurationError, EonoiseError


def test_dbm_reference_points():
    assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watt(10.0) == pytest.approx(10e-3, rel=1e-15)
    assert dbm_to_watt(-6.0) == pytest.approx(251.19e-6, rel=1e-4)


@given(st.floats(-60, 40))
def test_dbm_round_trip(dbm):
    assert watt_to_dbm(dbm_to_watt(dbm)) == pytest.approx(dbm, abs=1e-12)


def test_hz_to_rad():
    assert hz_to_rad(1.0) == pytest.approx(2 * np.pi)


def test_defaults_build():
    cfg = ExperimentConfig()
    runs = cfg.runs()
    assert set(runs) >= {"main", "decay"}
    assert sum(name.startswith("sweep_") for name in runs) == len(DEFAULT_CONFIG["sweep"]["peak_powers_dbm"])
    main = runs["main"]
    assert main.pulse.peak_power == pytest.approx(dbm_to_watt(5.0))
    assert main.times[1] - main.times[0] <= main.t_c / 5
    # seeds differ between runs so their noise realisations are independent
    assert len({r.seed for r in runs.values()}) == len(runs)


def test_fast_shift_at_default_power():
    cfg = ExperimentConfig()
    m, rr = cfg.bath_model(), cfg.resonator_response()
    n_fast = m.fast_gain * (cfg.pulse_train().peak_power / 1e-3) ** m.fast_exponent
    assert rr.freq_shift_coeff * n_fast / (2 * np.pi) == pytest.approx(-1.5e6, rel=1e-3)


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError, match="pulse.colour"):
        ExperimentConfig({"pulse": {"colour": "red"}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig({"nonsense": 1})


@pytest.mark.parametrize("override", [
    {"grid": {"dt": 1e-6}},
    {"chain": {"n_e_fraction": 1.5}},
    {"calibration": {"temperatures_k": [0.1]}},
    {"grid": {"df_hz": 10e6}},
    {"analysis": {"decay_k": 0}},
])
def test_invalid_values(override):
    with pytest.raises(EonoiseError):
        ExperimentConfig(override)


def test_disable_optional_runs():
    cfg = ExperimentConfig({"decay": None, "sweep": None})
    assert list(cfg.runs()) == ["main"]


def test_hash_stable_and_sensitive():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.hash == b.hash and len(a.hash) == 16
    assert a.with_seed(1).hash != a.hash
    # key order in the source mapping is irrelevant
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_load_json_and_yaml(tmp_path):
    override = {"seed": 7, "pulse": {"peak_power_dbm": 3.0}}
    pj = tmp_path / "c.json"
    pj.write_text(json.dumps(override))
    py = tmp_path / "c.yaml"
    py.write_text("seed: 7\npulse:\n  peak_power_dbm: 3.0\n")
    a, b = load_config(pj), load_config(py)
    assert a.hash == b.hash
    assert a.seed == 7


def test_load_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(bad)
    lst = tmp_path / "list.json"
    lst.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        load_config(lst)
