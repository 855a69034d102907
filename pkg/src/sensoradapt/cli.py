"""Command-line entry point for the experiments.

    sensoradapt <collect|train|circle|regulate|relearn|compare> --config PATH|PRESET --out DIR

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import load_config
from .errors import (
    ConfigError,
    DivergenceError,
    InfeasibleConfigurationError,
    RejectedActionError,
    SolverError,
)
from .estimator import train_unit
from .io import load_field, save_field, write_contours, write_json, write_trace
from .units import Unit, UnitField

COMMANDS = ("collect", "train", "circle", "regulate", "relearn", "compare")
log = logging.getLogger("sensoradapt")


def _parser():
    p = argparse.ArgumentParser(prog="sensoradapt", description="Local sensorimotor model experiments on a simulated cable.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file or preset name (single, two)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--method", default="adaptive_units", choices=harness.METHODS,
                   help="estimator used by 'regulate'")
    p.add_argument("--units", default=None, help="trained units.json to reuse instead of retraining")
    p.add_argument("--target", type=int, default=0, help="target index for 'regulate'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _field(cfg, args, out):
    if args.units:
        return load_field(args.units)
    field, reports = harness.build_field(cfg)
    save_field(field, out / "units.json")
    return field


def _collect(cfg, args, out):
    stores, rank = harness.collect_training_data(cfg)
    units = [Unit(np.asarray(w, float), np.zeros(cfg.m * cfg.n), s, cfg.m)
             for w, s in zip(cfg.centers, stores)]
    save_field(UnitField(units, cfg.sigma, cfg.m, cfg.n), out / "units.json")
    return {"command": "collect", "rank_report": rank}


def _train(cfg, args, out):
    if args.units:
        field = load_field(args.units)
        reports = [train_unit(u, cfg.sigma, cfg.gain_search(), cfg.stop(), unit_index=k)
                   for k, u in enumerate(field.units)]
    else:
        stores, _ = harness.collect_training_data(cfg)
        field, reports = harness.train_field(cfg, stores)
    save_field(field, out / "units.json")
    rep = []
    for r in reports:
        d = r.to_dict()
        d["final_Q"] = r.final_Q
        d["q_trace"] = d["q_trace"][-1:]
        rep.append(d)
    return {"command": "train", "units": rep}


def _circle(cfg, args, out):
    field = _field(cfg, args, out)
    trace = harness.run_circular_test(cfg, field)
    write_trace(trace, out / "trace.csv")
    write_contours(trace.contours, out / "contours")
    drops = harness.switch_drops(trace)
    return {
        "command": "circle",
        "switches": trace.events,
        "G_before_after": [{"t": t, "before": b, "after": a, "dropped": bool(a < b)} for t, b, a in drops],
    }


def _regulate(cfg, args, out):
    field = _field(cfg, args, out) if args.method == "adaptive_units" else None
    if not 0 <= args.target < len(cfg.targets):
        raise ConfigError(f"target index {args.target} outside the {len(cfg.targets)} configured targets")
    target = cfg.targets[args.target]
    try:
        trace = harness.run_regulation(cfg, args.method, target, field, record_contours=True)
    except DivergenceError as exc:
        _dump_trace(exc.trace, out)
        write_json({"command": "regulate", "method": args.method, **exc.trace.meta}, out / "report.json")
        raise
    _dump_trace(trace, out)
    return {"command": "regulate", "method": args.method, **trace.meta}


def _dump_trace(trace, out):
    write_trace(trace, out / "trace.csv")
    if trace.contours:
        write_contours(trace.contours, out / "contours")


def _relearn(cfg, args, out):
    field = _field(cfg, args, out)
    res = harness.run_relearn_test(cfg, field)
    relearned = res.pop("field")
    save_field(relearned, out / "units_relearned.json")
    return {"command": "relearn", **res}


def _compare(cfg, args, out):
    field = _field(cfg, args, out)
    res = harness.compare_methods(cfg, field)
    for (method, k), tr in res["traces"].items():
        d = out / f"{method}_target{k}"
        d.mkdir(parents=True, exist_ok=True)
        write_trace(tr, d / "trace.csv")
    return {"command": "compare", "rows": res["rows"]}


HANDLERS = {"collect": _collect, "train": _train, "circle": _circle,
            "regulate": _regulate, "relearn": _relearn, "compare": _compare}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = HANDLERS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    except (SolverError, InfeasibleConfigurationError, RejectedActionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    report["config"] = cfg.to_dict()
    write_json(report, out / "report.json")
    log.info("wrote %s", out / "report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
