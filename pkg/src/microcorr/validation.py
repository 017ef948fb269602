"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def as_matrix(x, name: str, *, allow_nan: bool = False) -> np.ndarray:
    """Coerce to a 2-d float array, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be non-empty, got shape {arr.shape}")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def as_vector(x, name: str) -> np.ndarray:
    """Coerce to a 1-d float array of finite values."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    if arr.size < 1:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be strictly positive, got {value}")
    return value


def check_probability(value: float, name: str, *, open_ends: bool = False) -> float:
    value = float(value)
    lo_ok = value > 0 if open_ends else value >= 0
    hi_ok = value < 1 if open_ends else value <= 1
    if not (np.isfinite(value) and lo_ok and hi_ok):
        raise ValidationError(f"{name} must lie in the unit interval, got {value}")
    return value


def check_same_rows(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValidationError(
            f"{name_a} and {name_b} must have the same number of rows: "
            f"{a.shape[0]} != {b.shape[0]}"
        )
