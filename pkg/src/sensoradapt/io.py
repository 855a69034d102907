"""Reading and writing run artifacts: unit snapshots, traces, reports, contours."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .units import DataStore, Observation, Unit, UnitField


def _plain(obj):
    """Convert numpy containers and scalars into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def field_to_dict(field: UnitField) -> dict:
    return {
        "sigma": field.sigma,
        "m": field.m,
        "n": field.n,
        "units": [
            {
                "w": u.w,
                "a_hat": u.a_hat,
                "tau": u.store.capacity,
                "observations": [{"x": d.x, "u": d.u, "delta": d.delta} for d in u.store],
            }
            for u in field.units
        ],
    }


def field_from_dict(d: dict) -> UnitField:
    try:
        units = []
        for ud in d["units"]:
            obs = tuple(Observation(o["x"], o["u"], o["delta"]) for o in ud["observations"])
            units.append(Unit(ud["w"], ud["a_hat"], DataStore(int(ud["tau"]), obs), int(d["m"])))
        return UnitField(units, float(d["sigma"]), int(d["m"]), int(d["n"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed unit snapshot: {exc}") from exc


def save_field(field: UnitField, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(field_to_dict(field))))
    return path


def load_field(path) -> UnitField:
    try:
        return field_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read unit snapshot {path}: {exc}") from exc


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2))
    return path


def write_trace(trace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace.header())
        for row in trace.table():
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_trace_csv(path):
    """Header and float rows of a trace file."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_contours(contours, directory, start=0) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, c in enumerate(contours, start):
        p = directory / f"step_{k:04d}.csv"
        c = np.asarray(c, dtype=float)
        table = np.column_stack([np.arange(len(c)), c])
        np.savetxt(p, table, delimiter=",", header="index,x,y", comments="", fmt=["%d", "%.17g", "%.17g"])
        paths.append(p)
    return paths
