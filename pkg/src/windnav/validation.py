"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_positions(X, n_cols: int = 3) -> np.ndarray:
    """Validate an (n, n_cols) finite float array of positions."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != n_cols:
        raise ValueError(f"expected {n_cols} columns, got {X.shape[1]}")
    return X


def check_state(q, name: str = "state") -> tuple:
    """Validate an (x, y, z, heading) tuple and return it as floats."""
    a = check_array(np.asarray(q, dtype=float).reshape(1, -1), ensure_all_finite=True)
    if a.shape[1] != 4:
        raise ValueError(f"{name} must have four entries (x, y, z, heading), got {a.shape[1]}")
    return tuple(float(v) for v in a[0])


def check_positive(value, name: str) -> float:
    v = float(value)
    if not (v > 0 and np.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return v
