"""Saturated pseudo-inverse motor commands and the filtered Jacobian estimate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError, RankDeficiencyError


@dataclass(frozen=True)
class ControllerParams:
    lam: float = 0.1
    sat_bound: float = 2.0
    eta: float = 0.2
    reg: float = 1e-6
    dt: float = 0.04

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidParameterError("feedback gain must lie in (0, 1)")
        if not self.sat_bound > 0:
            raise InvalidParameterError("saturation bound must be positive")
        if not 0 < self.eta <= 1:
            raise InvalidParameterError("filter gain must lie in (0, 1]")
        if self.reg < 0:
            raise InvalidParameterError("regularisation must be non-negative")
        if not self.dt > 0:
            raise InvalidParameterError("time step must be positive")


def saturate(v, bound: float) -> np.ndarray:
    if not bound > 0:
        raise InvalidParameterError("saturation bound must be positive")
    return np.clip(np.asarray(v, dtype=float), -bound, bound)


def pseudo_inverse(M, reg: float = 0.0) -> np.ndarray:
    """Moore-Penrose inverse for reg == 0, damped least-squares inverse otherwise."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise InvalidParameterError("matrix has non-finite entries")
    rows, cols = M.shape
    if reg == 0:
        if np.linalg.matrix_rank(M) < min(rows, cols):
            raise RankDeficiencyError("matrix is rank deficient; supply reg > 0")
        return np.linalg.pinv(M)
    if reg < 0:
        raise InvalidParameterError("regularisation must be non-negative")
    if rows >= cols:
        return np.linalg.solve(M.T @ M + reg * np.eye(cols), M.T)
    return M.T @ np.linalg.solve(M @ M.T + reg * np.eye(rows), np.eye(rows))


def motor_action(A, y, y_star, params: ControllerParams) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    err = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(y_star, dtype=float))
    if err.size != A.shape[0]:
        raise DimensionError(f"feature error has dim {err.size}, model has {A.shape[0]} rows")
    return -params.lam * pseudo_inverse(A, params.reg) @ saturate(err, params.sat_bound)


def filter_update(L, A_hat_s, eta: float) -> np.ndarray:
    """One step of the first-order filter pulling L toward the active unit's model."""
    if not 0 < eta <= 1:
        raise InvalidParameterError("filter gain must lie in (0, 1]")
    L = np.asarray(L, dtype=float)
    A_hat_s = np.asarray(A_hat_s, dtype=float)
    if L.shape != A_hat_s.shape:
        raise DimensionError("filtered and unit models differ in shape")
    return L - eta * (L - A_hat_s)


def adaptive_motor_action(L, y, y_star, params: ControllerParams) -> np.ndarray:
    return motor_action(L, y, y_star, params)


def closed_loop_step(y, u, A_true) -> np.ndarray:
    """First-order difference model y + A u."""
    return np.asarray(y, dtype=float) + np.atleast_2d(A_true) @ np.atleast_1d(u)


def to_velocity(u, dt: float = 0.04) -> np.ndarray:
    if not dt > 0:
        raise InvalidParameterError("time step must be positive")
    return np.asarray(u, dtype=float) / dt
