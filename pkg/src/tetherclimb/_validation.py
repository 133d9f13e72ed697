"""Small argument checks shared by the estimators and the functional API."""

import math

import numpy as np
from sklearn.utils import check_array


def check_positive(value, name, allow_zero=False):
    value = float(value)
    if not math.isfinite(value) and value != math.inf:
        raise ValueError(f"{name} must be a number, got {value!r}")
    if allow_zero:
        if value < 0:
            raise ValueError(f"{name} must be >= 0, got {value}")
    elif value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_probability(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_vector(value, name, size=3):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got shape {np.shape(value)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_grid(value, name, min_shape=(2, 2), dtype=float):
    """Validate a 2D grid (heights or a mask) through sklearn's array checker."""
    arr = check_array(value, dtype=dtype, ensure_2d=True, ensure_all_finite=dtype is float,
                      input_name=name)
    if arr.shape[0] < min_shape[0] or arr.shape[1] < min_shape[1]:
        raise ValueError(f"{name} must be at least {min_shape[0]}x{min_shape[1]}, got {arr.shape}")
    return arr
