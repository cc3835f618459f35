from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from mcgehee.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_analyze_outputs(tmp_path):
    assert main(["analyze", "--config", str(CONFIGS / "quartic_saddle.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    d = json.loads((tmp_path / "analyze.json").read_text())
    assert d["criteria"]["verdict"] == "totally-unstable"
    assert d["criteria"]["path"] == "non-generic"
    assert "verdict: totally-unstable" in (tmp_path / "analyze.txt").read_text()


def test_analyze_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["analyze", "--config", str(CONFIGS / "plane.yaml"), "--out", str(out), "--seed", "7"]) == EXIT_OK
        assert main(["fixed-points", "--config", str(CONFIGS / "plane.yaml"), "--out", str(out), "--seed", "7"]) == EXIT_OK
    for name in ("analyze.json", "analyze.txt", "fixed_points.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fixed_points_table(tmp_path):
    assert main(["fixed-points", "--config", str(CONFIGS / "pendulum.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "fixed_points.txt").read_text().splitlines()
    assert lines[0] == "# boundary fixed points: 4"
    assert len([l for l in lines if not l.startswith("#")]) == 5


def test_integrate_writes_csv(tmp_path):
    rc = main(["integrate", "--config", str(CONFIGS / "quartic_saddle.yaml"), "--out", str(tmp_path),
               "--frame", "blown", "--state", "0.1,1,0,0,0.2", "--t-max", "1", "--dt", "0.1"])
    assert rc == EXIT_OK
    data = np.loadtxt(tmp_path / "trajectory_blown.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 8 and np.allclose(np.diff(data[:, 0]), 0.1)


def test_integrate_rejects_non_unit_q(tmp_path):
    rc = main(["integrate", "--config", str(CONFIGS / "quartic_saddle.yaml"), "--out", str(tmp_path),
               "--frame", "blown", "--state", "0.1,1,1,0,0"])
    assert rc == EXIT_CONFIG


def test_escape_sweep(tmp_path):
    assert main(["escape", "--config", str(CONFIGS / "quartic_saddle.yaml"), "--out", str(tmp_path), "--count", "3"]) == EXIT_OK
    rows = (tmp_path / "escape.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 and all(r.split(",")[1] for r in rows)


def test_verify_passes(tmp_path):
    assert main(["verify", "--config", str(CONFIGS / "quartic_saddle.yaml"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "verify.txt").read_text().strip().endswith("ALL PASS")


def test_asymmetric_metric_exit_code(tmp_path):
    rec = lambda e, c: [{"exponents": e, "coeff": c}]
    cfg = {
        "system": {
            "dimension": 2,
            "potential": rec([2, 0], -1.0) + rec([0, 2], 1.0),
            "metric": [[rec([0, 0], 1.0), rec([1, 0], 0.5)], [[], rec([0, 0], 1.0)]],
        }
    }
    assert main(["analyze", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize(
    "text",
    ["system: [1, 2", "42", "system: {dimension: 2}", "system: {preset: nope}",
     "system: {preset: pendulum}\nintegrator: {rtol: 1.0}", "system: {preset: pendulum}\nintegrator: {bogus: 1}"],
)
def test_malformed_config_exit_code(tmp_path, text):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    assert main(["analyze", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_hypothesis_failure_exit_code(tmp_path):
    cfg = {"system": {"preset": "magnetic-quartic-saddle"}}
    # analysis reports the failed hypothesis as a verdict, the boomerang refuses to run
    assert main(["analyze", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "analyze.json").read_text())["criteria"]["verdict"] == "hypothesis-error"
    assert main(["boomerang", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_FAIL


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mcgehee", "fixed-points", "--config", str(CONFIGS / "plane.yaml"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "boundary fixed points" in r.stdout
