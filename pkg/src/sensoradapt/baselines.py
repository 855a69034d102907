"""Online Jacobian estimators used as comparison baselines."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class BroydenState:
    A_hat: np.ndarray
    skipped: int = 0
    last_status: str = "init"


@dataclass(frozen=True)
class RlsState:
    A_hat: np.ndarray
    P: np.ndarray
    rho: float = 0.99
    resets: int = 0
    last_status: str = "init"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise InvalidParameterError("forgetting factor must lie in (0, 1]")

    @classmethod
    def initial(cls, m: int, n: int, p0: float = 1e3, rho: float = 0.99) -> "RlsState":
        return cls(np.zeros((m, n)), p0 * np.eye(n), rho)


def broyden_update(state: BroydenState, u, delta, u_min: float = 1e-9) -> BroydenState:
    """Rank-one secant correction A + (delta - A u) u^T / (u^T u)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if np.linalg.norm(u) <= u_min:
        return replace(state, skipped=state.skipped + 1, last_status="skipped")
    A = state.A_hat
    A_new = A + np.outer(delta - A @ u, u) / (u @ u)
    return replace(state, A_hat=A_new, last_status="updated")


def rls_update(state: RlsState, u, delta, reset_scale: float = 1e3) -> RlsState:
    """Exponentially weighted RLS shared across rows; every row sees the same regressor u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    P, rho = state.P, state.rho
    status, resets = "updated", state.resets
    if not _is_spd(P) or not rho + u @ P @ u > 0:
        P = reset_scale * np.eye(u.size)
        status, resets = "covariance-reset", resets + 1
    Pu = P @ u
    k = Pu / (rho + u @ Pu)
    innov = delta - state.A_hat @ u
    A_new = state.A_hat + np.outer(innov, k)
    P_new = (P - np.outer(k, u @ P)) / rho
    P_new = 0.5 * (P_new + P_new.T)
    if not _is_spd(P_new):
        P_new = reset_scale * np.eye(u.size)
        status, resets = "covariance-reset", resets + 1
    return replace(state, A_hat=A_new, P=P_new, resets=resets, last_status=status)


def _is_spd(P) -> bool:
    if not np.all(np.isfinite(P)):
        return False
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True
