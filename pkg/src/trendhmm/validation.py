"""Input validation helpers shared by estimators and the functional core."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidParameterError

ROW_SUM_TOL = 1e-12
PROB_SUM_TOL = 1e-12


def as_float_array(x, name: str = "x", ndim: int = 1) -> np.ndarray:
    """Coerce to a contiguous float64 array of the given rank, finite throughout."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidParameterError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidParameterError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise InvalidParameterError(f"{name} contains a non-finite value at flat index {bad}")
    return np.ascontiguousarray(arr)


def check_returns(returns, name: str = "returns") -> np.ndarray:
    return as_float_array(returns, name=name, ndim=1)


def check_probability_vector(p, name: str = "pi", tol: float = PROB_SUM_TOL) -> np.ndarray:
    p = as_float_array(p, name=name, ndim=1)
    if np.any(p < 0.0):
        raise InvalidParameterError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise InvalidParameterError(f"{name} sums to {p.sum()!r}, expected 1 within {tol}")
    return p


def check_transition_matrix(A, n_states: int | None = None, name: str = "A",
                            tol: float = ROW_SUM_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {A.shape}")
    if n_states is not None and A.shape[0] != n_states:
        raise InvalidParameterError(f"{name} has {A.shape[0]} rows, expected {n_states}")
    if not np.all(np.isfinite(A)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    if np.any(A < 0.0):
        raise InvalidParameterError(f"{name} has negative entries")
    rowsum = A.sum(axis=1)
    if np.any(np.abs(rowsum - 1.0) > tol):
        bad = int(np.argmax(np.abs(rowsum - 1.0)))
        raise InvalidParameterError(
            f"{name} row {bad} sums to {rowsum[bad]!r}, expected 1 within {tol}")
    return np.ascontiguousarray(A)


def check_same_length(*named_arrays) -> None:
    """named_arrays: (name, array) pairs that must share their first dimension."""
    lengths = {name: len(arr) for name, arr in named_arrays}
    if len(set(lengths.values())) > 1:
        raise InvalidParameterError(f"length mismatch: {lengths}")


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")
    return value
