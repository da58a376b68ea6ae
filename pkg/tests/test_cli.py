import json

import pytest

from eonoise import cli
from eonoise.errors import FitFailureError
from eonoise.pipeline import Pipeline

from small_config import SMALL


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_default_config(capsys):
    assert run("default-config") == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 0


def test_help_lists_stages(capsys):
    with pytest.raises(SystemExit) as info:
        run("--help")
    assert info.value.code == 0
    assert "fit-resonance" in capsys.readouterr().out


def test_single_stage_and_chain(tmp_path, cfg_file, capsys):
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg_file, "--out", out) == 0
    assert run("run", "--config", cfg_file, "--out", out, "--stages", "calibrate,heat-budget") == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stages_run"] == ["calibrate", "heat-budget"]
    assert "config hash" in capsys.readouterr().out


def test_missing_dependency_is_validation_error(tmp_path, cfg_file, capsys):
    assert run("extract", "--config", cfg_file, "--out", tmp_path) == cli.EXIT_VALIDATION
    assert "simulate" in capsys.readouterr().err


def test_hash_mismatch_exit_code(tmp_path, cfg_file):
    assert run("simulate", "--config", cfg_file, "--out", tmp_path) == 0
    assert run("calibrate", "--config", cfg_file, "--out", tmp_path, "--seed", 3) == cli.EXIT_VALIDATION
    assert run("calibrate", "--config", cfg_file, "--out", tmp_path, "--seed", 3, "--override-hash") == 0


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"pulse": {"shape": "square"}}))
    assert run("heat-budget", "--config", p, "--out", tmp_path) == cli.EXIT_VALIDATION


def test_unknown_stage_exit_code(tmp_path, cfg_file):
    assert run("run", "--config", cfg_file, "--out", tmp_path, "--stages", "simulate,nope") == cli.EXIT_VALIDATION


def test_fit_failure_exit_code(tmp_path, cfg_file, monkeypatch):
    def boom(self):
        raise FitFailureError("no convergence")

    monkeypatch.setattr(Pipeline, "calibrate", boom)
    assert run("calibrate", "--config", cfg_file, "--out", tmp_path) == cli.EXIT_FIT


def test_io_errors_exit_code(tmp_path, cfg_file):
    assert run("simulate", "--config", cfg_file, "--out", tmp_path) == 0
    sweep = tmp_path / "sim/vts_sweep.csv"
    sweep.write_text("".join(sweep.read_text().splitlines(keepends=True)[:-2]))
    assert run("calibrate", "--config", cfg_file, "--out", tmp_path) == cli.EXIT_IO
    assert run("heat-budget", "--config", tmp_path / "absent.json", "--out", tmp_path) == cli.EXIT_IO
