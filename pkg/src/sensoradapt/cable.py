"""Quasi-static planar elastic cable held by kinematic grippers.

The cable is an inextensible chain of K equal segments described by their
absolute heading angles theta_0..theta_{K-1}.  Its static shape minimises the
discrete bending energy sum (theta_{i+1} - theta_i)^2, plus a ghost-edge term
for every end whose tangent is clamped, subject to the chain reaching the far
end point.  Inextensibility holds by construction; the two position
constraints are enforced by projection, and a Newton step in their null space
(with the reduced Hessian shifted to positive definite when needed) drives
the projected gradient to zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DimensionError,
    InfeasibleConfigurationError,
    InvalidParameterError,
    RejectedActionError,
    SolverError,
)
from .features import fourier_coeffs

GRAD_TOL = 1e-9
MAX_ITERS = 500
PROJ_TOL = 1e-14
STRAIGHT_RTOL = 1e-12


@dataclass(frozen=True)
class CableSpec:
    length: float = 0.8
    alpha: int = 100
    segments: int | None = None
    anchor: tuple = ((0.1, 0.0), np.pi / 2)

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidParameterError("cable length must be positive")
        if self.alpha < 2:
            raise InvalidParameterError("contour resolution must be >= 2")
        if self.segments is None:
            object.__setattr__(self, "segments", self.alpha - 1)
        if self.segments < 2:
            raise InvalidParameterError("need at least two segments")

    @property
    def seg_len(self) -> float:
        return self.length / self.segments


@dataclass(frozen=True)
class GripperState:
    position: tuple
    angle: float | None = None

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (2,) or not np.all(np.isfinite(p)):
            raise DimensionError("gripper position must be a finite 2-vector")
        object.__setattr__(self, "position", (float(p[0]), float(p[1])))


@dataclass
class CableSolution:
    contour: np.ndarray
    theta: np.ndarray
    energy: float
    iterations: int
    grad_norm: float


@lru_cache(maxsize=16)
def _stiffness(K: int, clamp_a: bool, clamp_b: bool) -> np.ndarray:
    D = np.diff(np.eye(K), axis=0)
    M = D.T @ D
    if clamp_a:
        M[0, 0] += 1.0
    if clamp_b:
        M[-1, -1] += 1.0
    M.setflags(write=False)
    return M


def _wrap(a: float) -> float:
    return (a + np.pi) % (2 * np.pi) - np.pi


class _Chain:
    """Energy and constraint evaluation for one boundary-value problem."""

    def __init__(self, K, ell, pa, pb, theta_a, theta_b):
        self.K, self.ell = K, ell
        self.pa = np.asarray(pa, dtype=float)
        self.target = np.asarray(pb, dtype=float) - self.pa
        self.theta_a, self.theta_b = theta_a, theta_b
        self.M = _stiffness(K, theta_a is not None, theta_b is not None)
        self.rhs = np.zeros(K)
        if theta_a is not None:
            self.rhs[0] += theta_a
        if theta_b is not None:
            self.rhs[-1] += theta_b
        self.const = (theta_a or 0.0) ** 2 + (theta_b or 0.0) ** 2

    def energy(self, th):
        return float(th @ self.M @ th - 2 * self.rhs @ th + self.const)

    def grad(self, th):
        return 2 * (self.M @ th - self.rhs)

    def constraint(self, th):
        return self.ell * np.array([np.cos(th).sum(), np.sin(th).sum()]) - self.target

    def jac(self, th):
        return self.ell * np.vstack([-np.sin(th), np.cos(th)])

    def project(self, th, max_iter=50):
        for _ in range(max_iter):
            c = self.constraint(th)
            if np.max(np.abs(c)) < PROJ_TOL:
                return th
            J = self.jac(th)
            JJ = J @ J.T
            if np.linalg.cond(JJ) > 1e14:
                return None
            th = th - J.T @ np.linalg.solve(JJ, c)
            if not np.all(np.isfinite(th)):
                return None
        return th if np.max(np.abs(self.constraint(th))) < 1e3 * PROJ_TOL else None

    def points(self, th):
        steps = self.ell * np.stack([np.cos(th), np.sin(th)], axis=1)
        return self.pa + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def _arc_guess(K, length, pa, pb, theta_a, theta_b):
    chord = np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    d = float(np.hypot(*chord))
    if d > 0:
        phi = float(np.arctan2(chord[1], chord[0]))
    else:
        phi = theta_a if theta_a is not None else (theta_b if theta_b is not None else 0.0)
    r = d / length
    # sin(b)/b = r on (0, pi]
    lo, hi = 0.0, np.pi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if np.sin(mid) / mid > r:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    side = 1.0
    if theta_a is not None and _wrap(theta_a - phi) != 0:
        side = float(np.sign(_wrap(theta_a - phi)))
    elif theta_b is not None and _wrap(phi - theta_b) != 0:
        side = float(np.sign(_wrap(phi - theta_b)))
    i = np.arange(K) + 0.5
    return phi + side * beta - side * 2 * beta * i / K


def _null_basis(J):
    Q, _ = np.linalg.qr(J.T, mode="complete")
    return Q[:, 2:]


def _minimise(chain: _Chain, th, max_iters=MAX_ITERS):
    th = chain.project(th)
    if th is None:
        raise SolverError("could not project initial guess onto the boundary constraints")
    E = chain.energy(th)
    kicks = 0
    for it in range(1, max_iters + 1):
        g = chain.grad(th)
        J = chain.jac(th)
        lam = -np.linalg.solve(J @ J.T, J @ g)
        r = g + J.T @ lam
        rnorm = float(np.linalg.norm(r))
        Z = _null_basis(J)
        curv = -chain.ell * (lam[0] * np.cos(th) + lam[1] * np.sin(th))
        W = 2 * chain.M + np.diag(curv)
        Hr = Z.T @ W @ Z
        Hr = 0.5 * (Hr + Hr.T)
        try:
            Lc = np.linalg.cholesky(Hr)
            pd = True
        except np.linalg.LinAlgError:
            pd = False
        if rnorm < GRAD_TOL and pd:
            return th, it, rnorm
        if pd:
            gr = Z.T @ g
            v = -np.linalg.solve(Lc.T, np.linalg.solve(Lc, gr))
        else:
            ev, V = np.linalg.eigh(Hr)
            if rnorm < GRAD_TOL:
                # saddle: step along the most negative curvature direction
                kicks += 1
                if kicks > 20:
                    raise SolverError("stuck at a non-minimal stationary shape", rnorm)
                v = 0.05 * V[:, 0]
            else:
                shift = max(1e-8, -ev[0] + 1e-3 * max(1.0, abs(ev[-1])))
                v = -V @ ((V.T @ (Z.T @ g)) / (ev + shift))
        p = Z @ v
        slope = float(g @ p)
        alpha = 1.0
        accepted = False
        for _ in range(40):
            cand = chain.project(th + alpha * p)
            if cand is not None:
                Ec = chain.energy(cand)
                if Ec <= E + 1e-4 * alpha * min(slope, 0.0) or (pd and rnorm < 1e-6 and alpha == 1.0):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            if rnorm < 1e-7:
                return th, it, rnorm
            raise SolverError("line search failed", rnorm)
        th, E = cand, Ec
    raise SolverError(f"no convergence in {max_iters} iterations", rnorm)


def _resample(points, alpha):
    if len(points) == alpha:
        return points
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], alpha)
    return np.stack([np.interp(t, s, points[:, 0]), np.interp(t, s, points[:, 1])], axis=1)


def solve_chain(spec: CableSpec, pa, theta_a, pb, theta_b, initial=None) -> CableSolution:
    K, L = spec.segments, spec.length
    pa, pb = np.asarray(pa, dtype=float), np.asarray(pb, dtype=float)
    chord = pb - pa
    d = float(np.hypot(*chord))
    if d > L * (1 + STRAIGHT_RTOL):
        raise InfeasibleConfigurationError(f"end separation {d:.6g} exceeds cable length {L:.6g}")
    if initial is None:
        th0 = _arc_guess(K, L, pa, pb, theta_a, theta_b)
    else:
        th0 = np.asarray(initial, dtype=float).copy()
        if th0.shape != (K,):
            raise DimensionError("warm start has the wrong number of segments")
    # clamp angles live on the 2 pi branch nearest to the guess
    if theta_a is not None:
        theta_a = th0[0] + _wrap(theta_a - th0[0])
    if theta_b is not None:
        theta_b = th0[-1] + _wrap(theta_b - th0[-1])
    chain = _Chain(K, spec.seg_len, pa, pb, theta_a, theta_b)
    if d >= L * (1 - STRAIGHT_RTOL):
        # the straight chain is the only feasible shape
        th = np.full(K, np.arctan2(chord[1], chord[0]))
        it, gn = 0, 0.0
    else:
        th, it, gn = _minimise(chain, th0)
    pts = chain.points(th)
    return CableSolution(_resample(pts, spec.alpha), th, chain.energy(th), it, gn)


def bending_energy(spec: CableSpec, theta, theta_a=None, theta_b=None) -> float:
    th = np.asarray(theta, dtype=float)
    e = float(np.sum(np.diff(th) ** 2))
    if theta_a is not None:
        e += (th[0] - theta_a) ** 2
    if theta_b is not None:
        e += (theta_b - th[-1]) ** 2
    return e


def _ends(spec: CableSpec, grippers):
    if isinstance(grippers, GripperState):
        grippers = (grippers,)
    grippers = tuple(grippers)
    if len(grippers) == 1:
        (pos, ang), g = spec.anchor, grippers[0]
        return np.asarray(pos, float), ang, np.asarray(g.position), g.angle
    if len(grippers) == 2:
        a, b = grippers
        return np.asarray(a.position), a.angle, np.asarray(b.position), b.angle
    raise DimensionError("expected one or two grippers")


def solve_shape(spec: CableSpec, grippers, initial=None) -> CableSolution:
    """Minimum bending-energy contour for the given gripper(s).

    One gripper: the cable runs from ``spec.anchor`` to it.  Two grippers: the
    cable runs from the first to the second and the anchor is unused.  A
    gripper whose angle is None leaves the cable tangent free at that end.
    """
    pa, ta, pb, tb = _ends(spec, grippers)
    return solve_chain(spec, pa, ta, pb, tb, initial)


def observe(spec: CableSpec, grippers) -> np.ndarray:
    return solve_shape(spec, grippers).contour


def babble(x, rng_seed, amplitude: float) -> np.ndarray:
    """Uniform random action in the box [-amplitude, amplitude]^n."""
    if not amplitude > 0:
        raise InvalidParameterError("babbling amplitude must be positive")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = np.atleast_1d(x).size
    return rng.uniform(-amplitude, amplitude, size=n)


class CableWorld:
    """Configuration-space view of the cable task.

    ``mode="single"``: x = (gx, gy), one gripper with a free tangent, the
    other end fixed at ``spec.anchor``.  ``mode="two"``: x = (xL, yL, aL,
    xR, yR, aR), both ends clamped in position and tangent.
    """

    def __init__(self, spec: CableSpec, mode: str = "single", harmonics: int = 4,
                 workspace=((0.0, 1.0), (0.0, 1.0)), warm_start: bool = True):
        if mode not in ("single", "two"):
            raise InvalidParameterError(f"unknown mode {mode!r}")
        self.spec = spec
        self.mode = mode
        self.harmonics = harmonics
        self.workspace = np.asarray(workspace, dtype=float)
        self.warm_start = warm_start
        self._last = None

    @property
    def n(self) -> int:
        return 2 if self.mode == "single" else 6

    def grippers(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != self.n:
            raise DimensionError(f"configuration must have {self.n} entries")
        if self.mode == "single":
            return (GripperState(x[:2]),)
        return (GripperState(x[:2], float(x[2])), GripperState(x[3:5], float(x[5])))

    def positions(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return [x[:2]] if self.mode == "single" else [x[:2], x[3:5]]

    def check(self, x):
        """Raise if x leaves the workspace box or over-stretches the cable."""
        lo, hi = self.workspace[:, 0], self.workspace[:, 1]
        for p in self.positions(x):
            if np.any(p < lo) or np.any(p > hi):
                raise RejectedActionError(f"gripper position {p} leaves the workspace")
        pa, _, pb, _ = _ends(self.spec, self.grippers(x))
        if np.hypot(*(pb - pa)) > self.spec.length:
            raise RejectedActionError("move would stretch the cable beyond its length")

    def solve(self, x) -> CableSolution:
        init = self._last if self.warm_start else None
        try:
            sol = solve_shape(self.spec, self.grippers(x), init)
        except SolverError:
            if init is None:
                raise
            sol = solve_shape(self.spec, self.grippers(x))
        self._last = sol.theta
        return sol

    def observe(self, x) -> np.ndarray:
        return self.solve(x).contour

    def features(self, x) -> np.ndarray:
        return fourier_coeffs(self.observe(x), self.harmonics)

    def apply_action(self, x, u) -> np.ndarray:
        return apply_action(x, u, self)


def apply_action(x, u, world: CableWorld | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != u.shape:
        raise DimensionError("action and configuration dimensions differ")
    x_next = x + u
    if world is not None:
        world.check(x_next)
    return x_next
