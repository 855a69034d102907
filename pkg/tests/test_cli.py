import json

import numpy as np
import pytest

from sensoradapt.cli import main
from sensoradapt.io import load_field, read_trace_csv


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--config", "single", "--out", str(out)]) == 0
    return out / "units.json"


def test_train_writes_snapshot(trained):
    field = load_field(trained)
    assert len(field) == 4 and field.m == 18 and field.n == 2
    assert len(field[0].store) == 40
    raw = json.loads(trained.read_text())
    assert set(raw["units"][0]) == {"w", "a_hat", "tau", "observations"}
    assert raw["sigma"] == 1.3


def test_regulate_outputs(tmp_path, trained):
    rc = main(["regulate", "--config", "single", "--out", str(tmp_path), "--units", str(trained)])
    assert rc == 0
    header, rows = read_trace_csv(tmp_path / "trace.csv")
    assert header[0] == "t" and header[-4:] == ["s", "G", "E", "U"]
    assert len(header) == 1 + 2 + 18 + 2 + 4
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "converged"
    contours = sorted((tmp_path / "contours").glob("step_*.csv"))
    assert len(contours) == len(rows)
    c = np.loadtxt(contours[0], delimiter=",", skiprows=1)
    assert c.shape == (100, 3)
    assert open(contours[0]).readline().strip() == "index,x,y"


def test_runs_are_reproducible(tmp_path, trained):
    for d in ("a", "b"):
        assert main(["compare", "--config", "single", "--out", str(tmp_path / d),
                     "--units", str(trained)]) == 0
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert ra["rows"] == rb["rows"]


def test_seed_override_changes_data(tmp_path):
    main(["collect", "--config", "single", "--out", str(tmp_path / "s0")])
    main(["collect", "--config", "single", "--out", str(tmp_path / "s1"), "--seed", "1"])
    a = load_field(tmp_path / "s0" / "units.json")
    b = load_field(tmp_path / "s1" / "units.json")
    assert not np.array_equal(a[0].store[0].u, b[0].store[0].u)
    assert json.loads((tmp_path / "s1" / "report.json").read_text())["config"]["seed"] == 1


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "single", "tau": 10}))
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_divergence_exit_code(tmp_path, trained):
    # a sign-flipped model drives the error away from the target
    raw = json.loads(trained.read_text())
    for u in raw["units"]:
        u["a_hat"] = [-v for v in u["a_hat"]]
    flipped = tmp_path / "flipped.json"
    flipped.write_text(json.dumps(raw))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "single", "lam": 0.9, "targets": [[0.45, 0.45]],
                               "start": [0.35, 0.35]}))
    rc = main(["regulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--units", str(flipped)])
    assert rc in (3, 4)
    assert (tmp_path / "o" / "trace.csv").exists() or rc == 4


def test_relearn_and_circle(tmp_path, trained):
    assert main(["relearn", "--config", "single", "--out", str(tmp_path / "r"), "--units", str(trained)]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["first_trigger_step"] is not None
    assert (tmp_path / "r" / "units_relearned.json").exists()
    assert main(["circle", "--config", "single", "--out", str(tmp_path / "c"), "--units", str(trained)]) == 0
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert len(rep["switches"]) == 4
