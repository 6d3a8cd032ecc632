import copy
import csv
import io
import json

import numpy as np
import pytest

from qcrb import cli, scenarios
from qcrb.errors import DivergentChi

SHIPPED = ["fuzz-random", "heterodyne-displacement", "phase-number", "su2-rotation", "thermal-number"]


def _shipped(name):
    return scenarios.load_config(scenarios.find_scenario(name))


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


# ---------------------------------------------------------------- list

def test_list_shipped(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for name in SHIPPED:
        assert name in out
    assert [e[0] for e in scenarios.list_scenarios()] == sorted(SHIPPED)


def test_list_custom_dir(tmp_path, capsys):
    assert [e[0] for e in scenarios.list_scenarios(tmp_path)] == sorted(SHIPPED)
    cfg = _shipped("thermal-number")
    cfg["name"] = "my-thermal"
    _write(tmp_path, cfg, "mine.json")
    assert "my-thermal" in [e[0] for e in scenarios.list_scenarios(tmp_path)]
    cfg["name"] = "thermal-number"
    _write(tmp_path, cfg, "dup.json")
    assert cli.main(["list", "--dir", str(tmp_path)]) == 1
    assert "duplicate scenario name" in capsys.readouterr().err


# ---------------------------------------------------------------- validate

@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_validate(name):
    assert scenarios.validate_config(scenarios.find_scenario(name)) == []


def test_validate_dim_too_small(tmp_path, capsys):
    cfg = _shipped("thermal-number")
    cfg["dim"] = 1
    assert cli.main(["validate", "--config", str(_write(tmp_path, cfg))]) == 1
    assert "dim >= 2" in capsys.readouterr().err


def test_validate_non_hermitian_rho0(tmp_path):
    cfg = _shipped("thermal-number")
    cfg["dim"] = 2
    bad = scenarios.encode_matrix(np.array([[0.5, 0.3], [0.1, 0.5]]))
    cfg["family"]["rho0"] = {"type": "explicit", "matrix": bad}
    diags = scenarios.validate_config(cfg)
    assert any(d.startswith("family.rho0") and "Hermitian" in d for d in diags)


def test_validate_reports_every_field(tmp_path):
    cfg = _shipped("heterodyne-displacement")
    cfg["hbar"] = -1
    cfg["mc"]["samples"] = 0
    cfg["bounds"] = ["right", "nonsense"]
    diags = scenarios.validate_config(cfg)
    assert any(d.startswith("hbar") for d in diags)
    assert any(d.startswith("mc.samples") for d in diags)
    assert any(d.startswith("bounds") for d in diags)


def test_validate_syntax_error_has_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "name": "x",\n  "dim": 4,,\n}\n')
    assert cli.main(["validate", "--config", str(path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_matrix_round_trip():
    m = np.array([[1.0, 2 - 1j], [2 + 1j, -0.5]])
    enc = scenarios.encode_matrix(m, hermitian=True)
    assert enc["data"][0][1] == [2.0, -1.0]
    assert np.array_equal(scenarios.decode_matrix(json.loads(json.dumps(enc))), m)


# ---------------------------------------------------------------- run / reports

def test_run_writes_reports_and_verifies(tmp_path, capsys):
    assert cli.main(["run", "--config", "thermal-number", "--out", str(tmp_path)]) == 0
    assert "Attained" in capsys.readouterr().out
    report_path = tmp_path / "thermal-number.json"
    report = json.loads(report_path.read_text())
    assert report["summary"]["violated"] is False
    rows = list(csv.DictReader(io.StringIO((tmp_path / "thermal-number.csv").read_text())))
    assert {r["bound"] for r in rows} == {"helstrom", "right"}
    assert all(r["verdict"] == "Attained" for r in rows)
    assert cli.main(["verify-report", str(report_path)]) == 0

    # a matrix flagged Hermitian that is not must fail verification
    bad = copy.deepcopy(report)
    g = bad["points"][0]["bounds"]["helstrom"]["matrix"]
    g["data"][0][0] = [1.0, 0.5]
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    assert cli.main(["verify-report", str(bad_path)]) == 2
    assert cli.main(["verify-report", str(tmp_path / "missing.json")]) == 1


def test_run_seed_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["run", "--config", "thermal-number", "--out", str(out), "--seed", "5",
                         "--format", "json"]) == 0
    ra = json.loads((a / "thermal-number.json").read_text())
    rb = json.loads((b / "thermal-number.json").read_text())
    assert scenarios.strip_timestamp(ra) == scenarios.strip_timestamp(rb)
    assert ra["points"][0]["mc"]["seed"] == [5, 0]
    assert not (a / "thermal-number.csv").exists()


def test_exit_codes_for_violation_and_numeric_failure(tmp_path, monkeypatch):
    real = scenarios.run_scenario

    def violated(cfg, seed=None):
        rep = real(cfg, seed)
        rep["summary"]["violated"] = True
        return rep

    monkeypatch.setattr(scenarios, "run_scenario", violated)
    assert cli.main(["run", "--config", "su2-rotation", "--out", str(tmp_path)]) == 2

    def broken(cfg, seed=None):
        raise DivergentChi("chi overflow")

    monkeypatch.setattr(scenarios, "run_scenario", broken)
    assert cli.main(["run", "--config", "su2-rotation", "--out", str(tmp_path)]) == 3
    assert cli.main(["run", "--config", "no-such-scenario"]) == 1


def test_soft_failures_are_recorded():
    cfg = _shipped("thermal-number")
    cfg["points"] = [[0.0]]
    cfg["audits"] = []
    cfg["mc"] = None
    del cfg["mc"]
    # the ALD of this family is unsolvable: recorded, not raised
    rep = scenarios.run_scenario(cfg)
    ald = rep["points"][0]["logderiv_residuals"]["ald"]
    assert ald["applicable"] is False
    assert scenarios.verify_report(rep) == []
