"""End-to-end CLI behaviour: artifacts, exit codes, reproducibility."""

import json
from pathlib import Path

import numpy as np
import pytest

from conset.cli import (EXIT_OK, EXIT_PARSE, EXIT_SOLVER, EXIT_VERIFY, main)

DECAY_MODEL = {
    "states": [{"name": "x1", "box": [0.1, 1.0]}],
    "parameters": [{"name": "k", "box": [0.5, 2.0]}],
    "dynamics": ["-k*x1"],
    "time_points": [0.0, 1.0],
    "measurements": [{}, {"x1": [0.2, 0.5]}],
}

BAD_MODEL = dict(DECAY_MODEL, dynamics=["-k * x1 ** 2"])


def _read_grid(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [list(map(float, r.split(","))) for r in lines[1:]]
    return header, np.array(rows)


def test_outer_static_writes_artifacts(tmp_path):
    out = tmp_path / "o"
    rc = main(["--model", "static", "--task", "outer", "--order", "2",
               "--grid", "21", "--out", str(out)])
    assert rc == EXIT_OK
    assert (out / "manifest.json").exists()
    data = json.loads((out / "outer_d2.json").read_text())
    assert data["kind"] == "outer" and data["verification"]["ok"]
    header, rows = _read_grid(out / "outer_d2_grid.csv")
    assert header == ["x1_scaled", "x1", "v0", "inside"]
    assert rows.shape == (21, 4)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["task"] == "outer"
    assert "config_hash" in manifest


def test_outer_grid_marks_truth(tmp_path):
    out = tmp_path / "o"
    assert main(["--model", "static", "--task", "outer", "--order", "4",
                 "--grid", "101", "--out", str(out)]) == EXIT_OK
    header, rows = _read_grid(out / "outer_d4_grid.csv")
    x = rows[:, header.index("x1")]
    inside = rows[:, header.index("inside")] > 0.5
    # guaranteed superset of the true set [0.2, 0.8] ...
    assert np.all(inside[(x >= 0.21) & (x <= 0.79)])
    # ... that is still informative far from it
    assert not np.any(inside[(x <= 0.05) | (x >= 0.95)])


def test_inner_static(tmp_path):
    out = tmp_path / "i"
    rc = main(["--model", "static", "--task", "inner", "--order", "3",
               "--grid", "41", "--out", str(out)])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_violation_programs"] == 1
    assert manifest["complete"] is True
    header, rows = _read_grid(out / "inner_d3_grid.csv")
    x = rows[:, header.index("x1")]
    inner = rows[:, header.index("inner")] > 0.5
    assert inner.any()
    # guaranteed subset of the true set [0.2, 0.8]
    assert np.all((x[inner] >= 0.2 - 1e-9) & (x[inner] <= 0.8 + 1e-9))
    assert (out / "violation_k1_g0.json").exists()


def test_certify_disjoint_and_static(tmp_path):
    out1 = tmp_path / "c1"
    assert main(["--model", "disjoint", "--task", "certify", "--order",
                 "2", "--out", str(out1)]) == EXIT_OK
    man = json.loads((out1 / "manifest.json").read_text())
    assert man["certificate"] is True
    cert = json.loads((out1 / "certificate_d2.json").read_text())
    assert cert["verification"]["ok"]

    out2 = tmp_path / "c2"
    assert main(["--model", "static", "--task", "certify", "--order", "2",
                 "--out", str(out2)]) == EXIT_OK
    man = json.loads((out2 / "manifest.json").read_text())
    assert man["certificate"] is None
    assert not (out2 / "certificate_d2.json").exists()


def test_sample_task(tmp_path):
    out = tmp_path / "s"
    rc = main(["--model", "static", "--task", "sample", "--samples", "50",
               "--seed", "5", "--out", str(out)])
    assert rc == EXIT_OK
    header, rows = _read_grid(out / "consistent_samples.csv")
    assert header == ["x1_scaled", "x1"]
    assert len(rows) == 50
    assert np.all((rows[:, 1] >= 0.2 - 1e-9) & (rows[:, 1] <= 0.8 + 1e-9))


def test_model_file_loading(tmp_path):
    path = tmp_path / "decay.json"
    path.write_text(json.dumps(DECAY_MODEL))
    out = tmp_path / "d"
    rc = main(["--model", str(path), "--task", "outer", "--order", "2",
               "--grid", "11", "--out", str(out)])
    assert rc == EXIT_OK
    assert (out / "outer_d2.json").exists()


def test_parse_error_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(BAD_MODEL))
    assert main(["--model", str(path), "--task", "outer",
                 "--out", str(tmp_path / "x")]) == EXIT_PARSE


def test_missing_model_exit_code(tmp_path):
    assert main(["--model", str(tmp_path / "nope.json"), "--task", "outer",
                 "--out", str(tmp_path / "x")]) == EXIT_PARSE


def test_bad_flags_exit_code(tmp_path):
    assert main(["--model", "static", "--task", "outer", "--order", "0",
                 "--out", str(tmp_path / "x")]) == EXIT_PARSE
    assert main(["--model", "static", "--task", "outer", "--grid", "1",
                 "--out", str(tmp_path / "x")]) == EXIT_PARSE


def test_grid_reevaluation_roundtrip(tmp_path):
    out = tmp_path / "o"
    assert main(["--model", "static", "--task", "outer", "--order", "2",
                 "--grid", "21", "--out", str(out)]) == EXIT_OK
    out2 = tmp_path / "g"
    rc = main(["--model", "static", "--task", "grid", "--grid", "21",
               "--set-json", str(out / "outer_d2.json"),
               "--out", str(out2)])
    assert rc == EXIT_OK
    a = (out / "outer_d2_grid.csv").read_text()
    b = (out2 / "set_grid.csv").read_text()
    assert a.splitlines() == b.splitlines()


def test_grid_task_requires_set_json(tmp_path):
    assert main(["--model", "static", "--task", "grid",
                 "--out", str(tmp_path / "x")]) == EXIT_PARSE


def test_byte_reproducibility(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["--model", "static", "--task", "outer", "--order",
                     "3", "--grid", "31", "--seed", "7",
                     "--out", str(out)]) == EXIT_OK
        outs.append(out)
    for name in ("outer_d3.json", "outer_d3_grid.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # manifests agree except for wall-clock and output-path fields
    m0 = json.loads((outs[0] / "manifest.json").read_text())
    m1 = json.loads((outs[1] / "manifest.json").read_text())
    for m in (m0, m1):
        m.pop("wall_time_s", None)
        m["config"].pop("out", None)
        m.pop("config_hash", None)
    assert m0 == m1
