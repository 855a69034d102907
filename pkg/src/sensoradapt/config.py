"""Scenario configuration, presets and validation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cable import CableSpec
from .controller import ControllerParams
from .errors import ConfigError, InvalidParameterError
from .estimator import GainSearchConfig, StopCriteria
from .features import feature_dim


@dataclass
class ScenarioConfig:
    scenario: str = "single"
    harmonics: int = 4
    tau: int = 40
    sigma: float = 1.3
    centers: list = field(default_factory=lambda: [[0.3, 0.5], [0.5, 0.5], [0.5, 0.3], [0.3, 0.3]])
    lam: float = 0.1
    sat_bound: float = 2.0
    eta: float = 0.2
    reg: float = 1e-6
    epsilon: float = 1e-3
    B: list | None = None
    seed: int = 0
    max_steps: int = 2000
    e_tol_ratio: float = 1e-3
    # cable world
    cable_length: float = 0.8
    alpha: int = 100
    segments: int | None = None
    anchor: list = field(default_factory=lambda: [0.1, 0.0])
    anchor_angle: float | None = float(np.pi / 2)
    # data collection
    babble_amplitude: float = 0.01
    spread: float = 0.05
    # learning
    gamma_init: float = 0.99
    mu: float | None = None
    gamma_min: float = 1e-8
    max_iters: int = 100_000
    q_tol: float = 1e-10
    # experiments
    start: list = field(default_factory=lambda: [0.4, 0.4])
    targets: list = field(default_factory=list)
    circle_steps: int = 250
    anchor_shift: list = field(default_factory=lambda: [0.1, 0.0])
    relearn_steps: int = 20
    relearn_epsilon: float | None = None
    epsilon_factor: float = 3.0
    probe_count: int = 20
    out_dir: str = "runs"

    @property
    def n(self) -> int:
        return 2 if self.scenario == "single" else 6

    @property
    def m(self) -> int:
        return feature_dim(self.harmonics)

    def cable_spec(self, anchor_shift=(0.0, 0.0)) -> CableSpec:
        pos = tuple(float(a + s) for a, s in zip(self.anchor, anchor_shift))
        return CableSpec(self.cable_length, self.alpha, self.segments, (pos, self.anchor_angle))

    def controller(self) -> ControllerParams:
        return ControllerParams(self.lam, self.sat_bound, self.eta, self.reg)

    def gain_search(self) -> GainSearchConfig:
        return GainSearchConfig(self.gamma_init, self.mu, self.gamma_min)

    def stop(self) -> StopCriteria:
        return StopCriteria(self.max_iters, self.q_tol)

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in ("single", "two"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.harmonics < 1:
            raise ConfigError("harmonics must be >= 1")
        if self.tau <= self.m * self.n:
            raise ConfigError(f"tau={self.tau} must exceed m*n={self.m * self.n}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.centers:
            raise ConfigError("at least one unit center is required")
        for c in self.centers:
            if len(c) != self.n:
                raise ConfigError(f"unit center {c} does not have {self.n} entries")
        if len(self.start) != self.n or any(len(t) != self.n for t in self.targets):
            raise ConfigError("start/targets must match the configuration dimension")
        if self.B is not None and (len(self.B) != self.m or min(self.B) <= 0):
            raise ConfigError("B must hold m positive weights")
        if self.epsilon < 0 or (self.relearn_epsilon is not None and self.relearn_epsilon < 0):
            raise ConfigError("epsilon must be non-negative")
        if not self.epsilon_factor > 1:
            raise ConfigError("epsilon_factor must exceed 1")
        if not (self.babble_amplitude > 0 and self.spread >= 0):
            raise ConfigError("babbling amplitude must be positive and spread non-negative")
        if self.max_steps < 1 or not 0 < self.e_tol_ratio < 1:
            raise ConfigError("invalid step budget or tolerance")
        try:
            self.cable_spec()
            self.controller()
            self.gain_search()
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = preset(d["scenario"]) if d.get("scenario") in PRESETS else {}
        return cls(**{**base, **d}).validate()


SINGLE = dict(
    scenario="single",
    targets=[[0.33, 0.47], [0.47, 0.46], [0.46, 0.33], [0.34, 0.34]],
)

TWO = dict(
    scenario="two",
    tau=120,
    cable_length=0.6,
    anchor_angle=None,
    centers=[
        [0.25, 0.45, 0.5, 0.65, 0.45, -0.5],
        [0.25, 0.40, 0.3, 0.65, 0.40, -0.3],
        [0.25, 0.45, 0.5, 0.65, 0.45, 0.5],
        [0.25, 0.40, 0.3, 0.65, 0.40, 0.3],
    ],
    start=[0.25, 0.43, 0.4, 0.65, 0.43, -0.4],
    targets=[
        [0.27, 0.45, 0.5, 0.63, 0.44, -0.5],
        [0.24, 0.41, 0.3, 0.66, 0.42, -0.3],
        [0.25, 0.44, 0.5, 0.64, 0.45, -0.2],
        [0.26, 0.42, 0.45, 0.65, 0.41, -0.45],
    ],
    anchor_shift=[0.0, 0.0],
)

PRESETS = {"single": SINGLE, "two": TWO}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return dict(PRESETS[name])


def load_config(path_or_name) -> ScenarioConfig:
    p = Path(path_or_name)
    if p.is_file():
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return ScenarioConfig.from_dict(data)
    if str(path_or_name) in PRESETS:
        return ScenarioConfig.from_dict(preset(str(path_or_name)))
    raise ConfigError(f"config {path_or_name} not found")
