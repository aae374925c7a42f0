"""Projections between Euclidean, hyperspherical, and toroidal representations.

Four representations are supported:

* unconstrained Euclidean vectors of dimension D,
* the unit hypersphere (standard L2 normalisation),
* the flat square torus, with one coordinate in [0, 1) per dimension and
  wraparound at the boundary,
* the Clifford torus, stored as interleaved (sin, cos) pairs where every
  pair has norm sqrt(1/P) so the whole vector is unit norm.

Angles appear only inside the trigonometric calls; the canonical flat-torus
coordinate is always the unit interval.  All functions accept a single
vector or an (n, d) batch and are pure, so they are safe to call from
multiple threads.
"""

from __future__ import annotations

import enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import (
    DEGENERATE_NORM_EPS,
    REPRESENTATION_ATOL,
    as_float_batch,
    check_finite,
)
from .exceptions import InvariantViolationError, ZeroPairError, ZeroVectorError

TWO_PI = 2.0 * np.pi


class GeometryTag(enum.IntEnum):
    """Identifies the space an embedding set lives in.

    The integer values double as the on-disk geometry byte.
    """

    EUCLIDEAN = 0
    HYPERSPHERE = 1
    FLAT_TORUS = 2
    CLIFFORD = 3

    @classmethod
    def from_name(cls, name: str) -> "GeometryTag":
        key = name.strip().lower().replace("_", "-")
        try:
            return _TAG_NAMES[key]
        except KeyError:
            raise ValueError(f"unknown geometry {name!r}") from None

    @property
    def cli_name(self) -> str:
        return _TAG_CLI[self]


_TAG_NAMES = {
    "euclidean": GeometryTag.EUCLIDEAN,
    "hypersphere": GeometryTag.HYPERSPHERE,
    "sphere": GeometryTag.HYPERSPHERE,
    "flat-torus": GeometryTag.FLAT_TORUS,
    "torus": GeometryTag.FLAT_TORUS,
    "clifford": GeometryTag.CLIFFORD,
}
_TAG_CLI = {
    GeometryTag.EUCLIDEAN: "euclidean",
    GeometryTag.HYPERSPHERE: "hypersphere",
    GeometryTag.FLAT_TORUS: "flat-torus",
    GeometryTag.CLIFFORD: "clifford",
}


def _restore(batch: np.ndarray, was_1d: bool) -> np.ndarray:
    return batch[0] if was_1d else batch


def l2_normalize(x) -> np.ndarray:
    """Project onto the unit hypersphere: x -> x / ||x||.

    Raises ZeroVectorError if any input norm is <= 1e-12.
    """
    arr, was_1d = as_float_batch(x)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms <= DEGENERATE_NORM_EPS):
        raise ZeroVectorError("cannot normalise a zero vector")
    return _restore(arr / norms[:, np.newaxis], was_1d)


def clifford_project(x) -> np.ndarray:
    """Map D angles (radians, any real value) onto the Clifford torus.

    Each coordinate x_d becomes the pair sqrt(1/D) * (sin x_d, cos x_d),
    interleaved, doubling the extrinsic dimension to 2D.  The map is total
    and 2*pi-periodic per coordinate.
    """
    arr, was_1d = as_float_batch(x)
    n, d = arr.shape
    if d < 1:
        raise ValueError("need at least one coordinate")
    scale = np.sqrt(1.0 / d)
    out = np.empty((n, 2 * d), dtype=np.float64)
    out[:, 0::2] = np.sin(arr)
    out[:, 1::2] = np.cos(arr)
    out *= scale
    return _restore(out, was_1d)


def l2p_project(x) -> np.ndarray:
    """Normalise consecutive coordinate pairs onto the Clifford torus.

    Each pair (x_{2i}, x_{2i+1}) is scaled to norm sqrt(2/D), so the output
    keeps the extrinsic dimension D and has unit total norm.  On inputs that
    already lie on a Clifford torus this is the identity.

    Raises ZeroPairError (with the pair index) if a pair has norm <= 1e-12;
    a silent fallback direction would corrupt gradients downstream.
    """
    arr, was_1d = as_float_batch(x)
    n, d = arr.shape
    if d % 2 != 0:
        raise ValueError(f"pairwise normalisation needs an even dimension, got {d}")
    pairs = arr.reshape(n, d // 2, 2)
    norms = np.linalg.norm(pairs, axis=2)
    if np.any(norms <= DEGENERATE_NORM_EPS):
        row, pair = np.argwhere(norms <= DEGENERATE_NORM_EPS)[0]
        raise ZeroPairError(pair, f"pair {pair} of vector {row} has zero norm")
    scale = np.sqrt(2.0 / d)
    out = (pairs * (scale / norms)[:, :, np.newaxis]).reshape(n, d)
    return _restore(out, was_1d)


def clifford_to_flat(z) -> np.ndarray:
    """Recover flat-torus coordinates from a Clifford-torus vector.

    Pair (s, c) maps to atan2(s, c) / 2pi, reduced into [0, 1).  Halves the
    extrinsic dimension.
    """
    arr, was_1d = as_float_batch(z)
    n, d = arr.shape
    if d % 2 != 0:
        raise ValueError(f"Clifford vectors have an even dimension, got {d}")
    pairs = arr.reshape(n, d // 2, 2)
    angles = np.arctan2(pairs[:, :, 0], pairs[:, :, 1])
    flat = np.mod(angles / TWO_PI, 1.0)
    # mod can round up to exactly 1.0 for tiny negative angles
    flat[flat >= 1.0] = 0.0
    return _restore(flat, was_1d)


def flat_to_clifford(t) -> np.ndarray:
    """Embed flat-torus coordinates in the Clifford torus (inverse of
    clifford_to_flat up to 1e-9)."""
    arr, was_1d = as_float_batch(t)
    return _restore(clifford_project(arr * TWO_PI), was_1d)


def pair_count(z) -> int:
    """Number of (sin, cos) pairs in a Clifford vector or batch."""
    d = np.asarray(z).shape[-1]
    if d % 2 != 0:
        raise ValueError(f"Clifford vectors have an even dimension, got {d}")
    return d // 2


def validate_geometry(x, tag: GeometryTag, atol: float = REPRESENTATION_ATOL) -> None:
    """Check that ``x`` satisfies the invariants of ``tag``.

    Raises InvariantViolationError on the first violation found.
    """
    arr, _ = as_float_batch(x)
    check_finite(arr)
    if arr.shape[1] < 1:
        raise InvariantViolationError("vectors must have at least one dimension")
    if tag == GeometryTag.EUCLIDEAN:
        return
    if tag == GeometryTag.HYPERSPHERE:
        norms = np.linalg.norm(arr, axis=1)
        err = np.max(np.abs(norms - 1.0))
        if err > atol:
            raise InvariantViolationError(
                f"hypersphere vectors must be unit norm (max error {err:.3g})"
            )
        return
    if tag == GeometryTag.FLAT_TORUS:
        if np.any(arr < 0.0) or np.any(arr >= 1.0):
            raise InvariantViolationError(
                "flat-torus coordinates must lie in [0, 1)"
            )
        return
    if tag == GeometryTag.CLIFFORD:
        n, d = arr.shape
        if d % 2 != 0:
            raise InvariantViolationError(
                f"Clifford vectors have an even dimension, got {d}"
            )
        p = d // 2
        pair_norms = np.linalg.norm(arr.reshape(n, p, 2), axis=2)
        err = np.max(np.abs(pair_norms - np.sqrt(1.0 / p)))
        if err > atol:
            raise InvariantViolationError(
                f"Clifford pair norms must equal sqrt(1/P) (max error {err:.3g})"
            )
        total = np.linalg.norm(arr, axis=1)
        err = np.max(np.abs(total - 1.0))
        if err > atol:
            raise InvariantViolationError(
                f"Clifford vectors must be unit norm (max error {err:.3g})"
            )
        return
    raise ValueError(f"unknown geometry tag {tag!r}")


class GeometryProjector(BaseEstimator, TransformerMixin):
    """Stateless transformer applying one of the geometry maps.

    Parameters
    ----------
    mode : str
        One of ``"l2"`` (hypersphere normalisation), ``"clifford"``
        (angle pairs, doubles the dimension), ``"l2p"`` (pairwise
        normalisation), ``"to-flat"`` (Clifford -> flat torus) or
        ``"to-clifford"`` (flat torus -> Clifford).
    """

    def __init__(self, mode: str = "l2"):
        self.mode = mode

    def _func(self):
        modes = {
            "l2": l2_normalize,
            "clifford": clifford_project,
            "l2p": l2p_project,
            "to-flat": clifford_to_flat,
            "to-clifford": flat_to_clifford,
        }
        if self.mode not in modes:
            raise ValueError(
                f"mode must be one of {sorted(modes)}, got {self.mode!r}"
            )
        return modes[self.mode]

    def fit(self, X, y=None):
        self._func()
        return self

    def transform(self, X) -> np.ndarray:
        return self._func()(X)

    @property
    def output_geometry(self) -> GeometryTag:
        return {
            "l2": GeometryTag.HYPERSPHERE,
            "clifford": GeometryTag.CLIFFORD,
            "l2p": GeometryTag.CLIFFORD,
            "to-flat": GeometryTag.FLAT_TORUS,
            "to-clifford": GeometryTag.CLIFFORD,
        }[self.mode]
