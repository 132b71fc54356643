import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from germfock.cli import fmt, main
from germfock.scenario import ConfigError, Scenario, load_scenario, shipped_scenarios


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def test_shipped_scenarios_present():
    assert {"circle", "quadratic", "quartic_k0", "detuned_circle", "stationary_dimer"} <= set(shipped_scenarios())


def test_validate_circle(tmp_path):
    code, out = _run(tmp_path, "validate", "--scenario", "circle")
    assert code == 0
    rep = json.loads((out / "validate.json").read_text())
    assert rep["schema"] == "germfock.summary/1"
    assert rep["pass"] is True


def test_residual_scan_quadratic_is_floor(tmp_path):
    code, out = _run(tmp_path, "residual-scan", "--scenario", "quadratic")
    assert code == 0
    rep = json.loads((out / "residuals.json").read_text())
    assert rep["status"] == "floor"
    with open(out / "residuals.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(float(r["r"]) / float(r["norm"]) <= 1e-6 for r in rows)


def test_detuned_assemble_fails_with_quantization_code(tmp_path, capsys):
    code, out = _run(tmp_path, "assemble", "--scenario", "detuned_circle")
    assert code == 3
    rec = json.loads((out / "failure.json").read_text())
    assert rec["code"] == "quantization"
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["code"] == "quantization"


def test_example2_passes(tmp_path):
    code, out = _run(tmp_path, "example2", "--scenario", "circle")
    assert code == 0
    rep = json.loads((out / "example2.json").read_text())
    assert rep["deviation"] <= 1e-6
    assert rep["off_sector"] <= rep["quad_error"]


def test_evolve_writes_trajectory(tmp_path):
    code, out = _run(tmp_path, "evolve", "--scenario", "quartic_k0")
    assert code == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t")
    assert (out / "defects.csv").exists()


def test_malformed_config_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "name": "x",\n  "D": 2,\n  oops\n}\n')
    code, _ = _run(tmp_path, "validate", "--scenario", str(bad))
    assert code == 2
    assert f"{bad}:4:" in capsys.readouterr().err


@pytest.mark.parametrize("mutation,match", [
    (lambda d: d.update(eps=[0.1, 0.1, 0.2]), "distinct"),
    (lambda d: d.update(eps=[-0.1, 0.2, 0.3]), "positive"),
    (lambda d: d["hamiltonian"].update(family="nonexistent"), "family"),
])
def test_semantic_config_errors(mutation, match):
    data = load_scenario("circle").to_dict()
    mutation(data)
    with pytest.raises(ConfigError, match=match):
        Scenario(data, "<test>").hamiltonian()


def test_bad_tolerance_override(tmp_path):
    code, _ = _run(tmp_path, "validate", "--scenario", "circle", "--tol-overrides", "nonsense=1")
    assert code == 2
    code, _ = _run(tmp_path, "validate", "--scenario", "circle", "--grid-scale", "0")
    assert code == 2


def test_tolerance_override_forces_failure(tmp_path):
    code, out = _run(tmp_path, "example2", "--scenario", "circle", "--tol-overrides", "sector_deviation=1e-30")
    assert code == 3
    assert json.loads((out / "failure.json").read_text())["code"] == "sector"


@pytest.mark.parametrize("name", ["circle", "quadratic", "quartic_k0", "detuned_circle", "stationary_dimer"])
def test_config_round_trip(name):
    sc = load_scenario(name)
    again = Scenario.from_text(sc.to_text(), "<round-trip>")
    assert again.to_dict() == sc.to_dict()
    assert again.to_text() == sc.to_text()
    assert again.hamiltonian().to_dict() == sc.hamiltonian().to_dict()


def test_deterministic_outputs_are_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["evolve", "--scenario", "quadratic", "--deterministic", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("trajectory.csv", "defects.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_fmt_uses_17_significant_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(np.pi)) == np.pi


def test_console_entry_point(tmp_path):
    exe = shutil.which("germfock")
    cmd = [exe] if exe else [sys.executable, "-m", "germfock.cli"]
    res = subprocess.run(cmd + ["validate", "--scenario", "circle", "--out", str(tmp_path)],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout.strip().splitlines()[-1])["pass"] is True
