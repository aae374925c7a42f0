"""Distances in each geometry, including the wraparound integer fast path.

The scalar operations accept single vectors or batches (applied row-wise);
``cross_distances`` / ``pairwise_distances`` produce full matrices and chunk
their work over rows with a fixed reduction order, so results do not depend
on block size.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

from ._validation import as_code_batch, as_float_batch, check_same_dim
from .data import EmbeddingSet, Encoding
from .exceptions import (
    AccumulatorOverflowError,
    BitWidthMismatchError,
    DimensionMismatchError,
    IncompatibleGeometryError,
)
from .geometry import GeometryTag, flat_to_clifford, l2_normalize

_ROW_BLOCK = 256  # rows per chunk in the matrix kernels


class DistanceKind(enum.Enum):
    """Distance selector; the string values double as CLI metric names."""

    COSINE = "cosine"
    FLAT_TORUS_L1 = "torus-l1"
    FLAT_TORUS_L2 = "torus-l2"
    FLAT_TORUS_L2_SQUARED = "torus-l2sq"
    EUCLIDEAN_L2 = "euclidean"
    HAMMING = "hamming"

    @classmethod
    def from_name(cls, name: str) -> "DistanceKind":
        for kind in cls:
            if kind.value == name.strip().lower():
                return kind
        raise ValueError(f"unknown distance kind {name!r}")


def cosine_distance(a, b) -> np.ndarray | float:
    """1 - <a, b> for unit-norm vectors; in [0, 2]."""
    a_arr, a_1d = as_float_batch(a)
    b_arr, b_1d = as_float_batch(b)
    check_same_dim(a_arr, b_arr)
    out = 1.0 - np.sum(a_arr * b_arr, axis=1)
    out = np.maximum(out, 0.0)
    return float(out[0]) if (a_1d and b_1d) else out


def flat_torus_distance(a, b, p: int = 2) -> np.ndarray | float:
    """Geodesic Lp distance on the flat torus (p in {1, 2}).

    Per dimension the shorter of the two arc directions is taken:
    delta = min(|a - b|, 1 - |a - b|), which lies in [0, 0.5].
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    a_arr, a_1d = as_float_batch(a)
    b_arr, b_1d = as_float_batch(b)
    check_same_dim(a_arr, b_arr)
    diff = np.abs(a_arr - b_arr)
    delta = np.minimum(diff, 1.0 - diff)
    if p == 1:
        out = delta.sum(axis=1)
    else:
        out = np.sqrt((delta * delta).sum(axis=1))
    return float(out[0]) if (a_1d and b_1d) else out


def _int_accum_capacity(n_bits: int, p: int) -> int:
    per_dim_max = 1 << (n_bits - 1)
    return (2**64 - 1) // (per_dim_max**p)


def _check_codes(codes: np.ndarray, n_bits: int) -> None:
    if not 1 <= n_bits <= 16:
        raise ValueError(f"bit width must be in 1..16, got {n_bits}")
    if codes.size and int(codes.max()) >= (1 << n_bits):
        raise BitWidthMismatchError(
            f"codes do not fit the declared {n_bits}-bit width"
        )


def int_torus_distance(a, b, n_bits: int, p: int = 1) -> int | np.ndarray:
    """Toroidal Lp distance on n-bit integer grid codes.

    Per dimension: delta = min((a - b) mod 2^n, (b - a) mod 2^n), computed
    with wrapping n-bit subtraction, never exceeding 2^(n-1).  Returns the
    plain sum for p=1 and the sum of squares for p=2 (no square root, so
    everything stays in integer arithmetic; rankings are unaffected).

    The 64-bit accumulator is checked up front: dimensions too large to
    accumulate safely raise AccumulatorOverflowError rather than wrapping.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    a_arr, a_1d = as_code_batch(a)
    b_arr, b_1d = as_code_batch(b)
    check_same_dim(a_arr, b_arr)
    _check_codes(a_arr, n_bits)
    _check_codes(b_arr, n_bits)
    if a_arr.shape[1] > _int_accum_capacity(n_bits, p):
        raise AccumulatorOverflowError(
            f"{a_arr.shape[1]} dimensions overflow the u64 accumulator "
            f"at n={n_bits}, p={p}"
        )
    delta = _wrapping_delta(a_arr.astype(np.uint64), b_arr.astype(np.uint64), n_bits)
    if p == 2:
        delta = delta * delta
    out = delta.sum(axis=1, dtype=np.uint64)
    return int(out[0]) if (a_1d and b_1d) else out


def _wrapping_delta(a: np.ndarray, b: np.ndarray, n_bits: int) -> np.ndarray:
    # uint64 subtraction wraps; the mask reduces it to n-bit semantics
    mask = np.uint64((1 << n_bits) - 1)
    forward = (a - b) & mask
    backward = (b - a) & mask
    return np.minimum(forward, backward)


def cc_norm(a) -> np.ndarray | float:
    """Cosine-composed norm of flat-torus coordinates relative to the origin.

    Equals D - sum_d cos(2 pi a_d), in [0, 2D]; computed as
    2 * sum_d sin^2(pi a_d), which is exact near the origin where the
    direct form loses all significant digits to cancellation.
    """
    arr, was_1d = as_float_batch(a)
    s = np.sin(np.pi * arr)
    out = 2.0 * (s * s).sum(axis=1)
    return float(out[0]) if was_1d else out


# ---------------------------------------------------------------------------
# matrix kernels


def _cross_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.maximum(1.0 - a @ b.T, 0.0)


def _cross_flat_torus(a: np.ndarray, b: np.ndarray, p: int,
                      squared: bool) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo in range(0, a.shape[0], _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, a.shape[0])
        diff = np.abs(a[lo:hi, None, :] - b[None, :, :])
        delta = np.minimum(diff, 1.0 - diff)
        if p == 1:
            out[lo:hi] = delta.sum(axis=2)
        else:
            s = (delta * delta).sum(axis=2)
            out[lo:hi] = s if squared else np.sqrt(s)
    return out


def _cross_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo in range(0, a.shape[0], _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, a.shape[0])
        diff = a[lo:hi, None, :] - b[None, :, :]
        out[lo:hi] = np.sqrt((diff * diff).sum(axis=2))
    return out


def _cross_int_torus(a: np.ndarray, b: np.ndarray, n_bits: int,
                     p: int) -> np.ndarray:
    a64 = a.astype(np.uint64)
    b64 = b.astype(np.uint64)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.uint64)
    for lo in range(0, a.shape[0], _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, a.shape[0])
        delta = _wrapping_delta(a64[lo:hi, None, :], b64[None, :, :], n_bits)
        if p == 2:
            delta = delta * delta
        out[lo:hi] = delta.sum(axis=2, dtype=np.uint64)
    return out


def _cross_hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    packed_a = np.packbits(a.astype(np.uint8), axis=1)
    packed_b = np.packbits(b.astype(np.uint8), axis=1)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.uint64)
    for lo in range(0, a.shape[0], _ROW_BLOCK):
        hi = min(lo + _ROW_BLOCK, a.shape[0])
        xor = packed_a[lo:hi, None, :] ^ packed_b[None, :, :]
        out[lo:hi] = np.bitwise_count(xor).sum(axis=2, dtype=np.uint64)
    return out


def hamming_distance(a, b) -> int | np.ndarray:
    """Popcount of XOR between 1-bit code vectors (row-wise)."""
    a_arr, a_1d = as_code_batch(a)
    b_arr, b_1d = as_code_batch(b)
    check_same_dim(a_arr, b_arr)
    _check_codes(a_arr, 1)
    _check_codes(b_arr, 1)
    xor = np.packbits(a_arr.astype(np.uint8), axis=1) ^ np.packbits(
        b_arr.astype(np.uint8), axis=1
    )
    out = np.bitwise_count(xor).sum(axis=1, dtype=np.uint64)
    return int(out[0]) if (a_1d and b_1d) else out


_FLOAT_KINDS = {
    DistanceKind.COSINE: (GeometryTag.HYPERSPHERE, GeometryTag.CLIFFORD),
    DistanceKind.FLAT_TORUS_L1: (GeometryTag.FLAT_TORUS,),
    DistanceKind.FLAT_TORUS_L2: (GeometryTag.FLAT_TORUS,),
    DistanceKind.FLAT_TORUS_L2_SQUARED: (GeometryTag.FLAT_TORUS,),
    DistanceKind.EUCLIDEAN_L2: (
        GeometryTag.EUCLIDEAN,
        GeometryTag.HYPERSPHERE,
        GeometryTag.FLAT_TORUS,
        GeometryTag.CLIFFORD,
    ),
}

_TORUS_PS = {
    DistanceKind.FLAT_TORUS_L1: (1, False),
    DistanceKind.FLAT_TORUS_L2: (2, False),
    DistanceKind.FLAT_TORUS_L2_SQUARED: (2, True),
}


def check_kind(dataset: EmbeddingSet, kind: DistanceKind) -> None:
    """Raise IncompatibleGeometryError unless ``kind`` applies to ``dataset``."""
    if dataset.encoding == Encoding.FLOAT:
        allowed = _FLOAT_KINDS.get(kind, ())
        if dataset.geometry not in allowed:
            raise IncompatibleGeometryError(
                f"{kind.value} is not defined for float "
                f"{dataset.geometry.cli_name} sets"
            )
        return
    if dataset.encoding == Encoding.GRID:
        if kind == DistanceKind.HAMMING:
            if dataset.n_bits != 1:
                raise IncompatibleGeometryError(
                    "hamming distance needs 1-bit codes"
                )
            return
        if kind in _TORUS_PS and dataset.geometry == GeometryTag.FLAT_TORUS:
            return
        raise IncompatibleGeometryError(
            f"{kind.value} is not defined for {dataset.n_bits}-bit "
            f"{dataset.geometry.cli_name} codes"
        )
    raise IncompatibleGeometryError(
        "distances on PQ codes require decoding with their codebook first"
    )


def natural_kind(dataset: EmbeddingSet) -> DistanceKind:
    """Default distance for a set: cosine on unit-norm data, toroidal L1 on
    the flat torus (matching the integer fast path), Hamming on 1-bit codes."""
    if dataset.encoding == Encoding.GRID:
        if dataset.n_bits == 1:
            return DistanceKind.HAMMING
        if dataset.geometry == GeometryTag.FLAT_TORUS:
            return DistanceKind.FLAT_TORUS_L1
        raise IncompatibleGeometryError(
            "dequantize sphere grid codes before distance evaluation"
        )
    if dataset.geometry in (GeometryTag.HYPERSPHERE, GeometryTag.CLIFFORD):
        return DistanceKind.COSINE
    if dataset.geometry == GeometryTag.FLAT_TORUS:
        return DistanceKind.FLAT_TORUS_L1
    return DistanceKind.EUCLIDEAN_L2


def cross_distances(queries: EmbeddingSet, index: EmbeddingSet,
                    kind: DistanceKind) -> np.ndarray:
    """Distance matrix between two sets (rows: queries, cols: index).

    On integer grid sets the toroidal kinds run entirely in wrapping integer
    arithmetic; L2 then means the summed *squared* distance (no root), which
    ranks identically.
    """
    if queries.geometry != index.geometry or queries.encoding != index.encoding:
        raise IncompatibleGeometryError(
            "query and index sets must share geometry and encoding"
        )
    if queries.dim != index.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: {queries.dim} vs {index.dim}"
        )
    check_kind(queries, kind)
    check_kind(index, kind)
    a, b = queries.vectors, index.vectors
    if queries.encoding == Encoding.GRID:
        if kind == DistanceKind.HAMMING:
            return _cross_hamming(a, b)
        if queries.n_bits != index.n_bits:
            raise BitWidthMismatchError(
                f"bit width mismatch: {queries.n_bits} vs {index.n_bits}"
            )
        p, _ = _TORUS_PS[kind]
        if queries.dim > _int_accum_capacity(queries.n_bits, p):
            raise AccumulatorOverflowError(
                f"{queries.dim} dimensions overflow the u64 accumulator"
            )
        return _cross_int_torus(a, b, queries.n_bits, p)
    if kind == DistanceKind.COSINE:
        return _cross_cosine(a, b)
    if kind == DistanceKind.EUCLIDEAN_L2:
        return _cross_euclidean(a, b)
    p, squared = _TORUS_PS[kind]
    return _cross_flat_torus(a, b, p, squared)


def pairwise_distances(dataset: EmbeddingSet, kind: DistanceKind) -> np.ndarray:
    """All-pairs distance matrix: symmetric with a zero diagonal.

    The upper triangle is computed once and mirrored, which makes symmetry
    exact even where the underlying kernel (e.g. a BLAS product) is not.
    """
    full = cross_distances(dataset, dataset, kind)
    upper = np.triu(full, k=1)
    return upper + upper.T


# ---------------------------------------------------------------------------
# distance-distribution simulation


@dataclasses.dataclass(frozen=True)
class DistanceDistribution:
    """Histogram and summary of normalised distances between random pairs."""

    geometry: GeometryTag
    kind: DistanceKind
    dim: int
    n_pairs: int
    seed: int
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    std: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("bin_left,bin_right,count\n")
            for left, right, count in zip(
                self.bin_edges[:-1], self.bin_edges[1:], self.counts
            ):
                fh.write(f"{float(left)!r},{float(right)!r},{int(count)}\n")


def _diameter(kind: DistanceKind, dim: int) -> float:
    if kind == DistanceKind.COSINE:
        return 2.0
    if kind == DistanceKind.FLAT_TORUS_L1:
        return dim / 2.0
    if kind == DistanceKind.FLAT_TORUS_L2:
        return np.sqrt(dim) / 2.0
    raise ValueError(f"no diameter normaliser for {kind.value}")


def distance_distribution_sim(geometry: GeometryTag, dim: int, n_pairs: int,
                              seed: int, kind: DistanceKind | None = None,
                              bins: int = 50) -> DistanceDistribution:
    """Sample uniform pairs in a bounded geometry and histogram their
    distances, normalised by the diameter of the space.

    Sampling: independent Uniform[0, 1) coordinates on the flat torus (and
    for the Clifford torus, which is sampled through its flat coordinates);
    normalised standard Gaussians on the hypersphere.  ``dim`` is the
    intrinsic dimension (pair count for the Clifford torus).
    """
    if dim < 1 or n_pairs < 1:
        raise ValueError("dim and n_pairs must be positive")
    rng = np.random.default_rng(seed)
    if geometry == GeometryTag.FLAT_TORUS:
        kind = kind or DistanceKind.FLAT_TORUS_L2
        if kind not in (DistanceKind.FLAT_TORUS_L1, DistanceKind.FLAT_TORUS_L2):
            raise IncompatibleGeometryError(
                f"{kind.value} is not simulated on the flat torus"
            )
        a = rng.random((n_pairs, dim))
        b = rng.random((n_pairs, dim))
        dists = flat_torus_distance(a, b, p=1 if kind == DistanceKind.FLAT_TORUS_L1 else 2)
    elif geometry == GeometryTag.HYPERSPHERE:
        kind = kind or DistanceKind.COSINE
        if kind != DistanceKind.COSINE:
            raise IncompatibleGeometryError(
                f"{kind.value} is not simulated on the hypersphere"
            )
        a = l2_normalize(rng.standard_normal((n_pairs, dim)))
        b = l2_normalize(rng.standard_normal((n_pairs, dim)))
        dists = cosine_distance(a, b)
    elif geometry == GeometryTag.CLIFFORD:
        kind = kind or DistanceKind.COSINE
        if kind != DistanceKind.COSINE:
            raise IncompatibleGeometryError(
                f"{kind.value} is not simulated on the Clifford torus"
            )
        a = flat_to_clifford(rng.random((n_pairs, dim)))
        b = flat_to_clifford(rng.random((n_pairs, dim)))
        dists = cosine_distance(a, b)
    else:
        raise IncompatibleGeometryError(
            "uniform pairs are only defined on bounded geometries"
        )
    normalised = np.atleast_1d(dists) / _diameter(kind, dim)
    counts, edges = np.histogram(normalised, bins=bins, range=(0.0, 1.0))
    return DistanceDistribution(
        geometry=geometry,
        kind=kind,
        dim=dim,
        n_pairs=n_pairs,
        seed=seed,
        bin_edges=edges,
        counts=counts,
        mean=float(normalised.mean()),
        std=float(normalised.std()),
    )
