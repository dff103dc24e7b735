"""Input validation helpers shared by the public estimator surfaces."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_csi_matrix",
    "check_positions",
    "check_precoder_power",
    "check_finite",
    "ValidationError",
]


class ValidationError(ValueError):
    """Public-API input failed validation."""


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr.view(np.float64) if np.iscomplexobj(arr) else arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_csi_matrix(h, n_antennas: int | None = None, name: str = "csi") -> np.ndarray:
    """Coerce to a complex [users x antennas] matrix with >= 1 user."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise ValidationError(f"{name} must be 2-d [users x antennas], got ndim={h.ndim}")
    if h.shape[0] < 1:
        raise ValidationError(f"{name} must have at least one user row")
    if n_antennas is not None and h.shape[1] != n_antennas:
        raise ValidationError(f"{name} has {h.shape[1]} antenna columns, expected {n_antennas}")
    h = h.astype(np.complex128, copy=False)
    return check_finite(h, name)


def check_positions(points, dim: int = 3, name: str = "positions") -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValidationError(f"{name} must be [n x {dim}], got shape {pts.shape}")
    return check_finite(pts, name)


def check_precoder_power(w: np.ndarray, p_max: float, tol: float = 1e-9, name: str = "precoder") -> np.ndarray:
    w = np.asarray(w, dtype=np.complex128)
    power = float(np.sum(np.abs(w) ** 2))
    if power > p_max + tol:
        raise ValidationError(f"{name} power {power:.6g} exceeds budget {p_max:.6g}")
    return w
