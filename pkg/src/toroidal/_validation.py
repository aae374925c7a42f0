"""Input validation helpers shared by the public estimators and functions."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, InvariantViolationError

# Norms at or below this are treated as degenerate (no direction).
DEGENERATE_NORM_EPS = 1e-12
# Tolerance for representation invariants (unit norms, pair norms).
REPRESENTATION_ATOL = 1e-9


def as_float_batch(x) -> tuple[np.ndarray, bool]:
    """Coerce to a float64 (n, d) array. Returns (array, was_1d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[np.newaxis, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected a vector or a batch of vectors, got ndim={arr.ndim}")


def as_code_batch(x) -> tuple[np.ndarray, bool]:
    """Coerce to an unsigned-integer (n, d) array. Returns (array, was_1d)."""
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"integer codes expected, got dtype {arr.dtype}")
    if np.issubdtype(arr.dtype, np.signedinteger):
        if arr.size and arr.min() < 0:
            raise ValueError("negative values are not valid codes")
        arr = arr.astype(np.uint64)
    if arr.ndim == 1:
        return arr[np.newaxis, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected codes or a batch of codes, got ndim={arr.ndim}")


def check_finite(x: np.ndarray, name: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        raise InvariantViolationError(f"{name} contains non-finite entries")


def check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def check_unit_norm(x: np.ndarray, atol: float = REPRESENTATION_ATOL,
                    name: str = "input") -> None:
    norms = np.linalg.norm(x, axis=-1)
    err = np.max(np.abs(norms - 1.0)) if norms.size else 0.0
    if err > atol:
        raise InvariantViolationError(
            f"{name} is not unit-norm (max |norm - 1| = {err:.3g} > {atol:g})"
        )
