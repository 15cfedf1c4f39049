"""Input validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import EmptyInput


def check_xy(X, *, allow_single=True) -> np.ndarray:
    """Coerce ``X`` to a float64 array of shape (n, 2) of finite planar coords.

    Accepts an (n, 2) array-like or a sequence of (x, y) pairs. Raises
    ``EmptyInput`` for zero rows and ``ValueError`` for bad shapes or
    non-finite values.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (2,) and allow_single:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) coordinate array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInput("no points supplied")
    if not np.isfinite(arr).all():
        raise ValueError("coordinates must be finite")
    return arr


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_non_negative(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_count(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
