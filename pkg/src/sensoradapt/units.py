"""Discrete configuration space: local computing units and their data stores."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, EmptyFieldError, EmptyStoreError, InvalidParameterError


TIE_RTOL = 1e-12


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class Observation:
    """One babbling sample: configuration, action and the sensor change it produced."""

    x: np.ndarray
    u: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))
        object.__setattr__(self, "u", _vec(self.u))
        object.__setattr__(self, "delta", _vec(self.delta))
        if self.x.shape != self.u.shape:
            raise DimensionError(f"x has dim {self.x.size} but u has dim {self.u.size}")
        for name in ("x", "u", "delta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidParameterError(f"observation field {name} is not finite")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.delta.size


@dataclass(frozen=True)
class DataStore:
    """Bounded observation queue, newest first."""

    capacity: int
    observations: tuple = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidParameterError("store capacity must be >= 1")
        object.__setattr__(self, "observations", tuple(self.observations))
        if len(self.observations) > self.capacity:
            raise InvalidParameterError("store holds more observations than its capacity")

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def __getitem__(self, k):
        return self.observations[k]

    @property
    def full(self) -> bool:
        return len(self.observations) == self.capacity

    def arrays(self):
        """Stacked (X, U, D) arrays of shapes (k, n), (k, n), (k, m)."""
        if not self.observations:
            raise EmptyStoreError("store is empty")
        return self._stacked

    @cached_property
    def _stacked(self):
        # the store is immutable, so the stacked copy is built once (read-only)
        out = tuple(np.stack([getattr(d, f) for d in self.observations]) for f in ("x", "u", "delta"))
        for a in out:
            a.flags.writeable = False
        return out


def push_observation(store: DataStore, d: Observation) -> DataStore:
    """Return a new store with ``d`` on top; the oldest sample drops out at capacity."""
    if store.observations:
        ref = store.observations[0]
        if d.n != ref.n or d.m != ref.m:
            raise DimensionError(
                f"observation dims (n={d.n}, m={d.m}) do not match store (n={ref.n}, m={ref.m})"
            )
    kept = store.observations[: store.capacity - 1]
    return DataStore(store.capacity, (d,) + kept)


@dataclass
class Unit:
    w: np.ndarray
    a_hat: np.ndarray
    store: DataStore
    m: int = field(default=0)

    def __post_init__(self):
        self.w = _vec(self.w)
        self.a_hat = _vec(self.a_hat)
        n = self.w.size
        if self.m == 0:
            if self.a_hat.size % n:
                raise DimensionError("parameter vector length is not a multiple of n")
            self.m = self.a_hat.size // n
        if self.a_hat.size != self.m * n:
            raise DimensionError(f"a_hat has length {self.a_hat.size}, expected {self.m * n}")

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def A_hat(self) -> np.ndarray:
        return self.a_hat.reshape(self.m, self.n)

    def copy(self) -> "Unit":
        return Unit(self.w.copy(), self.a_hat.copy(), self.store, self.m)


@dataclass
class UnitField:
    units: list
    sigma: float
    m: int
    n: int

    def __post_init__(self):
        if not self.units:
            raise EmptyFieldError("a unit field needs at least one unit")
        if not self.sigma > 0:
            raise InvalidParameterError("sigma must be positive")
        for u in self.units:
            if u.m != self.m or u.n != self.n:
                raise DimensionError("all units must share the field's (m, n)")

    def __len__(self):
        return len(self.units)

    def __getitem__(self, k) -> Unit:
        return self.units[k]

    @property
    def centers(self) -> np.ndarray:
        return np.stack([u.w for u in self.units])


def neighborhood_weight(w, x, sigma: float) -> float:
    w, x = _vec(w), _vec(x)
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    if w.shape != x.shape:
        raise DimensionError(f"dim(w)={w.size} differs from dim(x)={x.size}")
    d2 = float(np.sum((w - x) ** 2))
    return float(np.exp(-d2 / (2.0 * sigma**2)))


def nearest_unit(field: UnitField | np.ndarray, x) -> int:
    """Index of the closest unit center; ties resolve to the lowest index."""
    centers = field.centers if isinstance(field, UnitField) else np.atleast_2d(field)
    if centers.size == 0:
        raise EmptyFieldError("no units to search")
    x = _vec(x)
    if centers.shape[1] != x.size:
        raise DimensionError("configuration dimension differs from unit centers")
    d2 = np.sum((centers - x) ** 2, axis=1)
    # distances equal up to rounding count as ties; the first one wins
    scale = float(np.max(np.sum(centers**2, axis=1))) + float(x @ x)
    return int(np.flatnonzero(d2 <= d2.min() + TIE_RTOL * scale)[0])


def distortion(a_hat_s, u, delta, B=None) -> float:
    """Weighted prediction error e'Be of a unit's model on one observed move."""
    u, delta = _vec(u), _vec(delta)
    a = np.asarray(a_hat_s, dtype=float)
    A = a if a.ndim == 2 else a.reshape(delta.size, u.size)
    if A.shape != (delta.size, u.size):
        raise DimensionError(f"model shape {A.shape} incompatible with u/delta")
    b = np.ones(delta.size) if B is None else np.asarray(B, dtype=float)
    if b.ndim == 2:
        if np.count_nonzero(b - np.diag(np.diag(b))):
            raise InvalidParameterError("B must be diagonal")
        b = np.diag(b)
    if b.shape != (delta.size,):
        raise DimensionError("B does not match the feature dimension")
    if np.any(b <= 0):
        raise InvalidParameterError("distortion weights must be positive")
    e = A @ u - delta
    return float(e @ (b * e))


def needs_relearn(U: float, epsilon: float) -> bool:
    return U > abs(epsilon)
