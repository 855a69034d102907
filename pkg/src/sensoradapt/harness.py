"""Experiment drivers: data collection, training, circle test, regulation,
relearning and the method comparison."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .cable import CableWorld, babble
from .config import ScenarioConfig
from .controller import adaptive_motor_action, filter_update, motor_action
from .errors import DivergenceError, RejectedActionError
from .estimator import TrainReport, stack_phi, train_unit
from .features import feature_error, fourier_coeffs, model_error
from .units import (
    DataStore,
    Observation,
    Unit,
    UnitField,
    distortion,
    nearest_unit,
    needs_relearn,
    push_observation,
)

log = logging.getLogger(__name__)

METHODS = ("adaptive_units", "broyden", "rls", "exact")


@dataclass
class RunTrace:
    n: int
    m: int
    rows: list = field(default_factory=list)
    contours: list = field(default_factory=list)
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, t, x, y, u, s, G, E, U, contour=None):
        self.rows.append((t, np.array(x, float), np.array(y, float), np.array(u, float),
                          int(s), float(G), float(E), float(U)))
        if contour is not None:
            self.contours.append(np.asarray(contour))

    def column(self, name) -> np.ndarray:
        idx = {"t": 0, "x": 1, "y": 2, "u": 3, "s": 4, "G": 5, "E": 6, "U": 7}[name]
        return np.array([r[idx] for r in self.rows])

    def header(self):
        return (["t"] + [f"x{i}" for i in range(self.n)] + [f"y{i}" for i in range(self.m)]
                + [f"u{i}" for i in range(self.n)] + ["s", "G", "E", "U"])

    def table(self):
        for t, x, y, u, s, G, E, U in self.rows:
            yield [t, *x, *y, *u, s, G, E, U]


def make_world(cfg: ScenarioConfig, anchor_shift=(0.0, 0.0), warm_start=True) -> CableWorld:
    return CableWorld(cfg.cable_spec(anchor_shift), cfg.scenario, cfg.harmonics, warm_start=warm_start)


def _rng(cfg: ScenarioConfig, *stream) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, *stream])


def _local_sample(cfg, world, w, rng, spread=None):
    """A feasible (x, u) pair with x scattered around w and u a babbling move."""
    spread = cfg.spread if spread is None else spread
    for _ in range(100):
        x = np.asarray(w, float) + rng.uniform(-spread, spread, size=world.n)
        u = babble(x, rng, cfg.babble_amplitude)
        try:
            world.check(x)
            world.check(x + u)
        except RejectedActionError:
            continue
        return x, u
    raise RejectedActionError(f"no feasible babbling sample around {w}")


def observe_move(world, x, u):
    y0 = world.features(x)
    y1 = world.features(x + u)
    return y0, y1 - y0


def _rank_ok(store: DataStore, m: int, n: int) -> bool:
    return np.linalg.matrix_rank(stack_phi(store, m)) == m * n


def collect_training_data(cfg: ScenarioConfig, world: CableWorld | None = None):
    """Babble tau moves around every unit center.

    Returns (stores, rank_report).  A store whose stacked regression matrix is
    rank deficient gets up to three extra rounds of babbling pushed into it.
    """
    cfg.validate()
    world = world or make_world(cfg)
    stores, report = [], []
    for l, w in enumerate(cfg.centers):
        rng = _rng(cfg, 1, l)
        store = DataStore(cfg.tau)
        for _ in range(cfg.tau):
            x, u = _local_sample(cfg, world, w, rng)
            _, delta = observe_move(world, x, u)
            store = push_observation(store, Observation(x, u, delta))
        rounds = 0
        while not _rank_ok(store, cfg.m, cfg.n) and rounds < 3:
            rounds += 1
            log.warning("unit %d: regression matrix rank deficient, extra babbling round %d", l, rounds)
            for _ in range(cfg.tau):
                x, u = _local_sample(cfg, world, w, rng)
                _, delta = observe_move(world, x, u)
                store = push_observation(store, Observation(x, u, delta))
        rank = int(np.linalg.matrix_rank(stack_phi(store, cfg.m)))
        report.append({"unit_index": l, "rank": rank, "full_rank": rank == cfg.m * cfg.n,
                       "extra_rounds": rounds})
        stores.append(store)
    return stores, report


def train_field(cfg: ScenarioConfig, stores) -> tuple[UnitField, list[TrainReport]]:
    units, reports = [], []
    for l, (w, store) in enumerate(zip(cfg.centers, stores)):
        unit = Unit(np.asarray(w, float), np.zeros(cfg.m * cfg.n), store, cfg.m)
        reports.append(train_unit(unit, cfg.sigma, cfg.gain_search(), cfg.stop(), unit_index=l))
        units.append(unit)
    return UnitField(units, cfg.sigma, cfg.m, cfg.n), reports


def build_field(cfg: ScenarioConfig, world=None):
    stores, _ = collect_training_data(cfg, world)
    return train_field(cfg, stores)


def circle_path(cfg: ScenarioConfig):
    """Closed clockwise circle through the unit centers, starting at the first one.

    The circle is centred on the centers' mean.  Each arc between consecutive
    centers gets a share of ``circle_steps`` proportional to its angle, so every
    center is a sample of the path.
    """
    C = np.asarray(cfg.centers, float)
    if C.shape[1] != 2:
        raise ValueError("the circular test is defined for planar configurations")
    center = C.mean(axis=0)
    radius = float(np.mean(np.linalg.norm(C - center, axis=1)))
    ang = np.arctan2(C[:, 1] - center[1], C[:, 0] - center[0])
    # clockwise angular distance of every center from the first one
    sweep = np.unique(np.round((ang[0] - ang) % (2 * np.pi), 12))
    knots = np.append(sweep, 2 * np.pi)
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        k = max(1, int(round(cfg.circle_steps * (b - a) / (2 * np.pi))))
        pieces.append(np.linspace(a, b, k, endpoint=False))
    theta = ang[0] - np.append(np.concatenate(pieces), 2 * np.pi)
    return center + radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def run_circular_test(cfg: ScenarioConfig, field: UnitField, world=None) -> RunTrace:
    world = world or make_world(cfg)
    path = circle_path(cfg)
    ys, contours = [], []
    for x in path:
        sol = world.solve(x)
        contours.append(sol.contour)
        ys.append(fourier_coeffs(sol.contour, cfg.harmonics))
    trace = RunTrace(cfg.n, cfg.m, meta={"test": "circle"})
    prev = None
    for t in range(len(path) - 1):
        x, u = path[t], path[t + 1] - path[t]
        delta = ys[t + 1] - ys[t]
        s = nearest_unit(field, x)
        A = field[s].A_hat
        G = model_error(delta, A, u)
        U = distortion(A, u, delta, cfg.B)
        if prev is not None and s != prev:
            trace.events.append({"t": t, "from": prev, "to": s})
        prev = s
        trace.add(t, x, ys[t], u, s, G, np.nan, U, contours[t])
    return trace


def switch_drops(trace: RunTrace):
    """G just before and just after every unit switch."""
    G = trace.column("G")
    return [(ev["t"], G[ev["t"] - 1], G[ev["t"]]) for ev in trace.events]


def probe_jacobian(world, x, step):
    """Forward-difference Jacobian from n single-axis probe moves."""
    y0 = world.features(x)
    cols, moves = [], []
    for j in range(world.n):
        u = np.zeros(world.n)
        u[j] = step
        d = world.features(x + u) - y0
        cols.append(d / step)
        moves.append((u, d))
    world.features(x)
    return np.stack(cols, axis=1), moves


def central_jacobian(world, x, step=1e-5):
    cols = []
    for j in range(world.n):
        e = np.zeros(world.n)
        e[j] = step
        cols.append((world.features(x + e) - world.features(x - e)) / (2 * step))
    return np.stack(cols, axis=1)


def run_regulation(cfg: ScenarioConfig, method: str, target, field: UnitField | None = None,
                   world=None, start=None, record_contours=False, y_star=None) -> RunTrace:
    """Drive the cable from ``start`` toward the features recorded at ``target``.

    ``y_star`` overrides the target features directly (``target`` may then be None).

    Stops once E <= e_tol_ratio * E0 or after max_steps.  Raises
    DivergenceError (trace attached) if E exceeds ten times its initial value.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "adaptive_units" and field is None:
        raise ValueError("adaptive_units needs a trained unit field")
    world = world or make_world(cfg)
    params = cfg.controller()
    x = np.asarray(cfg.start if start is None else start, float)
    if y_star is None:
        y_star = world.features(np.asarray(target, float))
    y_star = np.asarray(y_star, float)
    y = world.features(x)
    E0 = feature_error(y, y_star)
    tol = cfg.e_tol_ratio * E0
    trace = RunTrace(cfg.n, cfg.m, meta={"method": method, "E0": E0, "tol": tol,
                                         "target": None if target is None else list(map(float, target))})
    L = np.zeros((cfg.m, cfg.n))
    if method == "broyden":
        A0, _ = probe_jacobian(world, x, cfg.babble_amplitude)
        est = baselines.BroydenState(A0)
    elif method == "rls":
        _, moves = probe_jacobian(world, x, cfg.babble_amplitude)
        est = baselines.RlsState.initial(cfg.m, cfg.n)
        for u, d in moves:
            est = baselines.rls_update(est, u, d)

    for t in range(cfg.max_steps + 1):
        E = feature_error(y, y_star)
        if E > 10 * E0 and E0 > 0:
            trace.meta.update(status="diverged", steps=t)
            raise DivergenceError(f"{method}: E grew from {E0:.3e} to {E:.3e}", trace)
        if E <= tol or t == cfg.max_steps:
            trace.add(t, x, y, np.zeros(cfg.n), -1, np.nan, E, np.nan,
                      world.observe(x) if record_contours else None)
            trace.meta.update(status="converged" if E <= tol else "budget", steps=t, final_E=E)
            return trace
        s = -1
        if method == "adaptive_units":
            s = nearest_unit(field, x)
            A_model = field[s].A_hat
            u = adaptive_motor_action(L, y, y_star, params)
            L = filter_update(L, A_model, params.eta)
        elif method == "exact":
            A_model = central_jacobian(world, x)
            u = motor_action(A_model, y, y_star, params)
        else:
            A_model = est.A_hat
            u = motor_action(A_model, y, y_star, params)
        x_next = world.apply_action(x, u)
        contour = world.observe(x) if record_contours else None
        y_next = world.features(x_next)
        delta = y_next - y
        G = model_error(delta, A_model, u)
        U = distortion(A_model, u, delta, cfg.B) if method == "adaptive_units" else np.nan
        trace.add(t, x, y, u, s, G, E, U, contour)
        if method == "broyden":
            est = baselines.broyden_update(est, u, delta)
        elif method == "rls":
            est = baselines.rls_update(est, u, delta)
        x, y = x_next, y_next
    raise AssertionError("unreachable")


def e_monotone(trace: RunTrace, skip=10, slack=0.05) -> bool:
    E = trace.column("E")[skip:]
    return bool(np.all(E[1:] <= (1 + slack) * E[:-1]))


def run_relearn_test(cfg: ScenarioConfig, field: UnitField, unit_index=None,
                     anchor_shift=None, epsilon=None) -> dict:
    """Detect a changed sensorimotor model through the distortion metric and relearn.

    Babbling around one unit in the nominal world must keep U below epsilon; in
    the world with the anchor displaced, U must cross epsilon, which triggers
    pushing tau fresh observations into that unit's store and retraining it.
    """
    shift = cfg.anchor_shift if anchor_shift is None else anchor_shift
    field = UnitField([u.copy() for u in field.units], field.sigma, field.m, field.n)
    s = 0 if unit_index is None else unit_index
    w = field[s].w

    def babble_run(world, rng, steps):
        Us = []
        for _ in range(steps):
            x, u = _local_sample(cfg, world, w, rng, spread=cfg.spread / 2)
            _, delta = observe_move(world, x, u)
            Us.append(distortion(field[nearest_unit(field, x)].A_hat, u, delta, cfg.B))
        return Us

    nominal = make_world(cfg)
    if epsilon is not None:
        eps = epsilon
    elif cfg.relearn_epsilon is not None:
        eps = cfg.relearn_epsilon
    else:
        # threshold set above the distortion seen while babbling in the unchanged world
        calib = babble_run(nominal, _rng(cfg, 3, 9), 2 * cfg.relearn_steps)
        eps = cfg.epsilon_factor * max(calib)
    out = {"unit_index": s, "epsilon": eps, "anchor_shift": list(map(float, shift))}
    U_nom = babble_run(nominal, _rng(cfg, 3, 0), cfg.relearn_steps)
    out["nominal_U"] = U_nom
    out["nominal_triggered"] = any(needs_relearn(U, eps) for U in U_nom)

    perturbed = make_world(cfg, shift)
    U_pert = babble_run(perturbed, _rng(cfg, 3, 1), cfg.relearn_steps)
    out["perturbed_U"] = U_pert
    hits = [k for k, U in enumerate(U_pert) if needs_relearn(U, eps)]
    out["first_trigger_step"] = hits[0] if hits else None

    probe_rng = _rng(cfg, 4, 0)
    probes = [_local_sample(cfg, perturbed, w, probe_rng, spread=cfg.spread / 2)
              for _ in range(cfg.probe_count)]
    probe_obs = [(x, u, observe_move(perturbed, x, u)[1]) for x, u in probes]

    def probe_G(A):
        return [model_error(d, A, u) for _, u, d in probe_obs]

    out["G_before"] = probe_G(field[s].A_hat)
    if hits:
        rng = _rng(cfg, 5, s)
        store = field[s].store
        for _ in range(cfg.tau):
            x, u = _local_sample(cfg, perturbed, w, rng)
            _, delta = observe_move(perturbed, x, u)
            store = push_observation(store, Observation(x, u, delta))
        field[s].store = store
        rep = train_unit(field[s], cfg.sigma, cfg.gain_search(), cfg.stop(), unit_index=s)
        out["retrain_iterations"] = rep.iterations
        out["G_after"] = probe_G(field[s].A_hat)
        out["U_after"] = babble_run(perturbed, _rng(cfg, 3, 2), cfg.relearn_steps)
    out["field"] = field
    return out


def compare_methods(cfg: ScenarioConfig, field: UnitField, targets=None,
                    methods=("adaptive_units", "broyden", "rls")) -> dict:
    targets = cfg.targets if targets is None else targets
    rows, traces = [], {}
    for k, target in enumerate(targets):
        for method in methods:
            try:
                tr = run_regulation(cfg, method, target, field)
                status = tr.meta["status"]
            except DivergenceError as exc:
                tr, status = exc.trace, "diverged"
            traces[(method, k)] = tr
            E = tr.column("E")
            rows.append({
                "method": method,
                "target": k,
                "status": status,
                "steps_to_tol": tr.meta.get("steps") if status == "converged" else None,
                "E0": tr.meta["E0"],
                "final_E": float(E[-1]),
            })
    return {"rows": rows, "traces": traces}
