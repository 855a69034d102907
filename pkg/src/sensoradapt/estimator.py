"""Gaussian-weighted gradient estimation of a unit's local Jacobian.

The parameter vector of a unit is the row-major flattening of its m x n
matrix estimate.  Training follows a plain gradient descent on the weighted
quadratic cost; the learning gain is chosen by a 1D decreasing search that
keeps the dissipation matrix of the Lyapunov difference positive definite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    EmptyStoreError,
    GainSearchError,
    InvalidParameterError,
)
from .units import DataStore, Unit

log = logging.getLogger(__name__)

PD_RTOL = 1e-10


def regression_matrix(u, m: int) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if m < 1 or u.ndim != 1 or u.size < 1:
        raise DimensionError(f"need m >= 1 and a non-empty action, got m={m}, u={u.shape}")
    return np.kron(np.eye(m), u[None, :])


def flatten(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError("flatten expects an m x n matrix")
    return A.reshape(-1).copy()


def unflatten(a, m: int, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != m * n:
        raise DimensionError(f"vector of length {a.size} cannot be shaped {m}x{n}")
    return a.reshape(m, n).copy()


def weights(unit: Unit, sigma: float) -> np.ndarray:
    """Gaussian weight of every stored observation with respect to the unit center."""
    if len(unit.store) == 0:
        raise EmptyStoreError("unit store is empty")
    if not sigma > 0:
        raise InvalidParameterError("sigma must be positive")
    X = unit.store.arrays()[0]
    return np.exp(-np.sum((X - unit.w) ** 2, axis=1) / (2.0 * sigma**2))


def _unit_arrays(unit: Unit, sigma: float):
    if len(unit.store) == 0:
        raise EmptyStoreError("unit store is empty")
    _, U, D = unit.store.arrays()
    if U.shape[1] != unit.n or D.shape[1] != unit.m:
        raise DimensionError("store dimensions do not match the unit")
    return U, D, weights(unit, sigma)


def cost_Q(unit: Unit, sigma: float) -> float:
    U, D, h = _unit_arrays(unit, sigma)
    R = U @ unit.A_hat.T - D
    return 0.5 * float(np.sum(h * np.sum(R * R, axis=1)))


def gradient_Q(unit: Unit, sigma: float) -> np.ndarray:
    """Phi^T H (Phi a - delta) with Phi the stacked regression matrices."""
    U, D, h = _unit_arrays(unit, sigma)
    phi = stack_phi(unit.store, unit.m)
    r = phi @ unit.a_hat - D.reshape(-1)
    return phi.T @ (np.repeat(h, unit.m) * r)


def update_step(unit: Unit, gamma: float, sigma: float) -> np.ndarray:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    return unit.a_hat - gamma * gradient_Q(unit, sigma)


def update_step_scalar(unit: Unit, gamma: float, sigma: float) -> np.ndarray:
    """Element-wise form of the update; kept loop-based as an independent check."""
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    U, D, h = _unit_arrays(unit, sigma)
    m, n = unit.m, unit.n
    a = unit.a_hat
    out = np.empty_like(a)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(len(h)):
                pred = 0.0
                for r in range(n):
                    pred += a[i * n + r] * U[k, r]
                acc += h[k] * U[k, j] * (pred - D[k, i])
            out[i * n + j] = a[i * n + j] - gamma * acc
    return out


def stack_phi(store: DataStore, m: int) -> np.ndarray:
    if len(store) == 0:
        raise EmptyStoreError("cannot stack an empty store")
    U = store.arrays()[1]
    tau, n = U.shape
    # block k, row i holds u_k in columns i*n .. i*n + n - 1
    phi = np.zeros((tau, m, m, n))
    idx = np.arange(m)
    phi[:, idx, idx, :] = U[:, None, :]
    return phi.reshape(tau * m, m * n)


def build_H(unit: Unit, sigma: float) -> np.ndarray:
    return np.diag(np.repeat(weights(unit, sigma), unit.m))


def _h_diag(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return np.diag(H) if H.ndim == 2 else H


def _assemble_C(phi, h, gamma: float) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if h.size != phi.shape[0]:
        raise DimensionError("H and Phi row counts differ")
    HP = h[:, None] * phi
    C = np.diag(2.0 * h) - gamma * HP @ HP.T
    return 0.5 * (C + C.T)


def stability_matrix_C(phi, H, gamma: float):
    """C = 2H - gamma H Phi Phi^T H, returned with its smallest eigenvalue."""
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    C = _assemble_C(phi, _h_diag(H), gamma)
    return C, float(np.linalg.eigvalsh(C)[0])


def omega(phi, H, gamma: float) -> np.ndarray:
    C, _ = stability_matrix_C(phi, H, gamma)
    phi = np.asarray(phi, dtype=float)
    W = gamma * phi.T @ C @ phi
    return 0.5 * (W + W.T)


def is_positive_definite(C, rtol: float = PD_RTOL) -> bool:
    """True when min-eig(C) exceeds rtol * ||C||, so numerically singular C is rejected.

    Large matrices use a shifted Cholesky factorisation against the Frobenius
    norm instead of a full eigen-decomposition.
    """
    C = np.asarray(C, dtype=float)
    if C.shape[0] <= 600:
        ev = np.linalg.eigvalsh(C)
        return bool(ev[0] > rtol * np.max(np.abs(ev)))
    floor = rtol * np.linalg.norm(C, "fro")
    try:
        np.linalg.cholesky(C - floor * np.eye(C.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class GainSearchConfig:
    gamma_init: float = 0.99
    mu: float | None = None
    gamma_min: float = 1e-8

    def __post_init__(self):
        if self.mu is None:
            object.__setattr__(self, "mu", self.gamma_init / 100)
        if not (0 < self.gamma_min < self.gamma_init <= 1):
            raise InvalidParameterError("need 0 < gamma_min < gamma_init <= 1")
        if not self.mu > 0:
            raise InvalidParameterError("search step mu must be positive")


def find_gamma(phi, H, cfg: GainSearchConfig = GainSearchConfig()) -> float:
    """Decrease gamma from its initial value in steps of mu until C > 0.

    C = H^(1/2) (2I - gamma M M^T) H^(1/2) with M = H^(1/2) Phi, so by
    congruence C > 0 exactly when gamma * lambda_max(M^T M) < 2.  The loop runs
    on that small mn x mn spectrum and the accepted gain is re-checked on the
    assembled C.
    """
    phi = np.asarray(phi, dtype=float)
    h = _h_diag(H)
    if np.any(h <= 0):
        raise InvalidParameterError("H must be positive definite")
    M = np.sqrt(h)[:, None] * phi
    lam_max = float(np.linalg.eigvalsh(M.T @ M)[-1])
    k = 1
    while True:
        gamma = cfg.gamma_init - k * cfg.mu
        if gamma < cfg.gamma_min:
            raise GainSearchError(
                f"no gain >= {cfg.gamma_min} satisfies C > 0 (lambda_max={lam_max:.3e})"
            )
        if 2.0 - gamma * lam_max > 2.0 * PD_RTOL:
            if is_positive_definite(_assemble_C(phi, h, gamma)):
                return gamma
        k += 1


@dataclass(frozen=True)
class StopCriteria:
    max_iters: int = 100_000
    q_tol: float = 1e-10


@dataclass
class TrainReport:
    unit_index: int
    gamma: float
    iterations: int
    q_trace: list
    omega_min_eig: float
    v_trace: list | None = None
    status: str = "ok"

    @property
    def final_Q(self) -> float:
        return self.q_trace[-1]

    def to_dict(self) -> dict:
        d = {
            "unit_index": self.unit_index,
            "gamma": self.gamma,
            "iterations": self.iterations,
            "q_trace": self.q_trace,
            "omega_min_eig": self.omega_min_eig,
            "status": self.status,
        }
        if self.v_trace is not None:
            d["v_trace"] = self.v_trace
        return d


def train_unit(
    unit: Unit,
    sigma: float,
    cfg: GainSearchConfig = GainSearchConfig(),
    stop: StopCriteria = StopCriteria(),
    a_true=None,
    unit_index: int = 0,
    trace_every: int = 1,
) -> TrainReport:
    """Iterate the update rule on a unit in place until Q stalls.

    The iteration uses the weighted Gram matrices sum h u u^T and sum h delta u^T,
    which is the same rule as ``update_step`` without re-summing the store.
    """
    U, D, h = _unit_arrays(unit, sigma)
    m, n = unit.m, unit.n
    gamma = find_gamma(stack_phi(unit.store, m), np.repeat(h, m), cfg)

    # Phi^T H Phi = I_m kron G, so the spectrum of omega is 2 g gamma - gamma^2 g^2 over eig(G)
    G = (h[:, None] * U).T @ U  # n x n
    g = np.linalg.eigvalsh(G)
    om_eigs = 2 * gamma * g - gamma**2 * g**2
    om_min = float(np.min(om_eigs))
    status = "ok"
    if om_min <= PD_RTOL * float(np.max(np.abs(om_eigs))):
        status = "rank-deficient"
        log.warning("unit %d: dissipation matrix is singular, convergence to truth not guaranteed", unit_index)

    R = (h[:, None] * D).T @ U  # m x n
    A = unit.A_hat.copy()
    a_ref = None if a_true is None else np.asarray(a_true, dtype=float).reshape(m, n)

    def q_of(A):
        res = U @ A.T - D
        return 0.5 * float(np.sum(h * np.sum(res * res, axis=1)))

    q = q_of(A)
    q_trace = [q]
    v_trace = None if a_ref is None else [float(np.sum((A - a_ref) ** 2))]
    it = 0
    while it < stop.max_iters and q > 0.0:
        A = A - gamma * (A @ G - R)
        it += 1
        q_new = q_of(A)
        if it % trace_every == 0:
            q_trace.append(q_new)
            if v_trace is not None:
                v_trace.append(float(np.sum((A - a_ref) ** 2)))
        done = abs(q - q_new) <= stop.q_tol * q or q_new == 0.0
        q = q_new
        if done:
            break
    if it % trace_every:
        q_trace.append(q)
        if v_trace is not None:
            v_trace.append(float(np.sum((A - a_ref) ** 2)))
    unit.a_hat = A.reshape(-1)
    return TrainReport(unit_index, gamma, it, q_trace, om_min, v_trace, status)
