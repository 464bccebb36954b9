"""Small input-validation helpers shared across the estimator-style classes."""

from __future__ import annotations

import numpy as np


def as_float_matrix(X, name="X"):
    """Coerce to a 2-D float64 array, rejecting NaN/inf."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_series(x, name="series"):
    """Coerce to a 1-D float64 array, rejecting NaN/inf."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_square(M, name="matrix"):
    M = as_float_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def check_symmetric(M, name="matrix", tol=1e-12):
    M = check_square(M, name)
    if M.shape[0] and np.max(np.abs(M - M.T)) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    return M


def check_distance_matrix(D, name="distance matrix", tol=1e-12):
    """Symmetric, non-negative, zero diagonal."""
    D = check_symmetric(D, name, tol)
    if D.size:
        if np.min(D) < -tol:
            raise ValueError(f"{name} has negative entries")
        if np.max(np.abs(np.diag(D))) > tol:
            raise ValueError(f"{name} has a non-zero diagonal")
    return D
