"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when array/frame dimensions disagree (CLI exit code 3)."""


def check_positive(name: str, value: float) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def check_positions(X, *, name: str = "X") -> np.ndarray:
    """Validate and return an (n, 2) float64 array of finite 2-D positions."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite positions")
    return arr


def check_same_shape(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"dimension mismatch: {name_a} has shape {a.shape}, {name_b} has shape {b.shape}"
        )


def check_smoothing_matrix(H) -> np.ndarray:
    """Validate a 2x2 symmetric positive-definite smoothing matrix."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (2, 2):
        raise ValueError(f"smoothing matrix must be 2x2, got shape {H.shape}")
    if abs(H[0, 1] - H[1, 0]) > 1e-12 * max(1.0, abs(H[0, 1])):
        raise ValueError("smoothing matrix must be symmetric")
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    if det <= 0 or H[0, 0] <= 0:
        raise ValueError("smoothing matrix must be positive definite")
    return H
