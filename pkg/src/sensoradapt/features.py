"""Truncated Fourier-series features of a planar contour.

Each coordinate is fit by least squares as a function of a parameter
t in [0, 1) against {1, cos 2 pi k t, sin 2 pi k t} for k = 1..H.  The feature
vector is [x: DC, cos1, sin1, ..., cosH, sinH, y: DC, cos1, sin1, ...], so
m = 2 (2H + 1).
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, InsufficientSamplesError, InvalidParameterError


def feature_dim(harmonics: int) -> int:
    return 2 * (2 * harmonics + 1)


def arclength_params(contour) -> np.ndarray:
    """Normalised cumulative arc length scaled so the last point sits at (a-1)/a."""
    c = np.asarray(contour, dtype=float)
    seg = np.linalg.norm(np.diff(c, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    alpha = len(c)
    if s[-1] == 0:
        return np.arange(alpha) / alpha
    return s / s[-1] * (alpha - 1) / alpha


def basis(t, harmonics: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    cols = [np.ones_like(t)]
    for k in range(1, harmonics + 1):
        cols.append(np.cos(2 * np.pi * k * t))
        cols.append(np.sin(2 * np.pi * k * t))
    return np.stack(cols, axis=1)


def fourier_coeffs(contour, harmonics: int, params=None) -> np.ndarray:
    c = np.asarray(contour, dtype=float)
    if c.ndim != 2 or c.shape[1] != 2:
        raise DimensionError("contour must be an (alpha, 2) array")
    if harmonics < 0:
        raise InvalidParameterError("harmonics must be non-negative")
    if len(c) < 2 * harmonics + 1:
        raise InsufficientSamplesError(
            f"{len(c)} points cannot determine {2 * harmonics + 1} coefficients per channel"
        )
    t = arclength_params(c) if params is None else np.asarray(params, dtype=float)
    coef, *_ = np.linalg.lstsq(basis(t, harmonics), c, rcond=None)
    return np.concatenate([coef[:, 0], coef[:, 1]])


def reconstruct(f, alpha: int, params=None) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.size % 2 or (f.size // 2) % 2 != 1:
        raise DimensionError(f"feature length {f.size} is not 2(2H+1)")
    if alpha < 2:
        raise InvalidParameterError("alpha must be at least 2")
    harmonics = (f.size // 2 - 1) // 2
    t = np.arange(alpha) / alpha if params is None else np.asarray(params, dtype=float)
    B = basis(t, harmonics)
    half = f.size // 2
    return np.stack([B @ f[:half], B @ f[half:]], axis=1)


def feature_error(y, y_star) -> float:
    e = np.asarray(y, dtype=float) - np.asarray(y_star, dtype=float)
    return float(e @ e)


def model_error(delta, A_hat, u) -> float:
    e = np.asarray(delta, dtype=float) - np.atleast_2d(A_hat) @ np.atleast_1d(u)
    return float(e @ e)
