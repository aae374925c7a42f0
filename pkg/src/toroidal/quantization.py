"""Grid and product quantisation of embedding sets.

Grid quantisation maps each coordinate to an n-bit integer: on the flat
torus the lattice wraps modulo 2^n (so 0.999... rounds to 0), while
unit-norm data is mapped affinely from [-1, 1] to [0, 2^n - 1] with
clamping and no wraparound.  Product quantisation splits vectors into
subspaces and codes each with the index of its nearest trained centroid.

All rounding is half-to-even for cross-platform reproducibility.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_code_batch, as_float_batch
from .data import EmbeddingSet, Encoding
from .exceptions import (
    DimensionMismatchError,
    IncompatibleGeometryError,
    IndivisibleDimensionError,
    TooFewPointsError,
)
from .geometry import GeometryTag, clifford_to_flat, l2_normalize

KMEANS_ITERATIONS = 25


class QuantConfig(enum.Enum):
    """The supported quantisation configurations.

    ``PQ_axb`` denotes product quantisation with ``b`` subspaces, each coded
    by an ``a``-bit centroid index (codebook of 2^a centroids per subspace).
    """

    GRID8 = "grid8"
    GRID1 = "grid1"
    PQ_8X16 = "pq8x16"
    PQ_8X4 = "pq8x4"
    PQ_8X2 = "pq8x2"
    PQ_8X1 = "pq8x1"
    PQ_4X4 = "pq4x4"
    PQ_4X2 = "pq4x2"

    @classmethod
    def from_name(cls, name: str) -> "QuantConfig":
        for config in cls:
            if config.value == name.strip().lower():
                return config
        raise ValueError(f"unknown quantisation config {name!r}")

    @property
    def is_pq(self) -> bool:
        return self.value.startswith("pq")

    @property
    def grid_bits(self) -> int:
        if self.is_pq:
            raise ValueError(f"{self.value} is not a grid config")
        return 8 if self is QuantConfig.GRID8 else 1

    @property
    def index_bits(self) -> int:
        """Bits per subspace index (the first number in the PQ label)."""
        if not self.is_pq:
            raise ValueError(f"{self.value} is not a PQ config")
        return int(self.value[2:].split("x")[0])

    @property
    def subspaces(self) -> int:
        """Subspace count (the second number in the PQ label)."""
        if not self.is_pq:
            raise ValueError(f"{self.value} is not a PQ config")
        return int(self.value.split("x")[1])


def bits_per_vector(config: QuantConfig, dim: int, geometry: GeometryTag) -> int:
    """Encoded size of one vector in bits.

    ``dim`` is the extrinsic dimension of the stored input data.  For 8-bit
    grid quantisation of Clifford data the count halves, because the data
    is converted to flat-torus coordinates (half the extrinsic dimension)
    before quantisation; 1-bit grid codes are taken in the ambient space,
    so no halving applies there.
    """
    if config.is_pq:
        return config.index_bits * config.subspaces
    if config is QuantConfig.GRID8:
        if geometry == GeometryTag.CLIFFORD:
            return 8 * (dim // 2)
        return 8 * dim
    return dim


def codebook_scalars(config: QuantConfig, dim: int) -> int:
    """Full-precision scalars a decoder must hold in memory.

    Grid codes need only the two linear scaling parameters per dimension;
    PQ needs every centroid coordinate: subspaces * 2^bits * (dim/subspaces).
    """
    if config.is_pq:
        return (1 << config.index_bits) * dim
    return 2 * dim


# ---------------------------------------------------------------------------
# grid quantisation


def _code_dtype(n_bits: int):
    return np.uint8 if n_bits <= 8 else np.uint16


def grid_quantize(x, n_bits: int, geometry: GeometryTag) -> np.ndarray:
    """Quantise coordinates to an n-bit integer grid.

    Flat torus: code = round(v * 2^n) mod 2^n, so values just below 1 wrap
    to code 0.  Unit-norm geometries: affine map of [-1, 1] onto
    [0, 2^n - 1], clamped at the ends (saturating, no wraparound).
    """
    if not 1 <= n_bits <= 16:
        raise ValueError(f"bit width must be in 1..16, got {n_bits}")
    arr, was_1d = as_float_batch(x)
    if geometry == GeometryTag.FLAT_TORUS:
        codes = np.mod(np.rint(arr * float(1 << n_bits)), 1 << n_bits)
    elif geometry in (GeometryTag.HYPERSPHERE, GeometryTag.CLIFFORD):
        top = float((1 << n_bits) - 1)
        codes = np.clip(np.rint((arr + 1.0) * 0.5 * top), 0.0, top)
    else:
        raise IncompatibleGeometryError(
            f"grid quantisation is not defined for {geometry.cli_name} data"
        )
    codes = codes.astype(_code_dtype(n_bits))
    return codes[0] if was_1d else codes


def grid_dequantize(codes, geometry: GeometryTag, n_bits: int,
                    renormalize: bool = True) -> np.ndarray:
    """Map grid codes back to coordinates.

    Flat torus: v = code / 2^n, the exact grid point (codes round-trip
    exactly).  Unit-norm geometries: the centre of the affine cell; with
    ``renormalize`` the vector is scaled back to unit norm, which is what
    distance evaluation uses.  ``renormalize=False`` returns the raw cell
    centres, for which encode(decode(c)) == c holds exactly.
    """
    arr, was_1d = as_code_batch(codes)
    if geometry == GeometryTag.FLAT_TORUS:
        out = arr.astype(np.float64) / float(1 << n_bits)
    elif geometry in (GeometryTag.HYPERSPHERE, GeometryTag.CLIFFORD):
        top = float((1 << n_bits) - 1)
        out = arr.astype(np.float64) * (2.0 / top) - 1.0
        if renormalize:
            out = l2_normalize(out)
    else:
        raise IncompatibleGeometryError(
            f"grid dequantisation is not defined for {geometry.cli_name} data"
        )
    return out[0] if was_1d else out


# ---------------------------------------------------------------------------
# product quantisation


@dataclasses.dataclass(frozen=True)
class PQCodebook:
    """Trained product-quantiser centroids.

    ``centroids`` has shape (n_subspaces, 2^n_bits, dim / n_subspaces).
    ``geometry`` records the space of the training data: FLAT_TORUS
    codebooks assign with wraparound coordinate deltas at encode time.
    """

    n_subspaces: int
    n_bits: int
    centroids: np.ndarray
    geometry: GeometryTag
    seed: int

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=np.float64)
        expected = (self.n_subspaces, 1 << self.n_bits)
        if centroids.ndim != 3 or centroids.shape[:2] != expected:
            raise ValueError(
                f"centroids must have shape ({expected[0]}, {expected[1]}, "
                f"subdim), got {centroids.shape}"
            )
        centroids = centroids.copy()
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)

    @property
    def k(self) -> int:
        return 1 << self.n_bits

    @property
    def subdim(self) -> int:
        return self.centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.n_subspaces * self.subdim


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            # only duplicates of chosen centers remain
            idx = rng.integers(n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator,
            n_iter: int = KMEANS_ITERATIONS) -> tuple[np.ndarray, float]:
    """Lloyd iterations with k-means++ init and empty-cluster repair.

    An empty cluster is repaired by splitting the largest cluster: its
    centroid moves onto the member farthest from that cluster's mean (ties
    broken by lowest index), which never increases the objective.  The
    assignment-time objective is checked to be non-increasing.
    """
    centers = _kmeans_pp_init(x, k, rng)
    previous = np.inf
    inertia = np.inf
    for _ in range(n_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(x.shape[0]), assign].sum())
        if inertia > previous * (1.0 + 1e-12) + 1e-12:
            raise AssertionError(
                f"k-means objective increased: {previous} -> {inertia}"
            )
        previous = inertia
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        for empty in np.flatnonzero(~nonempty):
            donor = int(counts.argmax())
            members = np.flatnonzero(assign == donor)
            far = ((x[members] - centers[donor]) ** 2).sum(axis=1)
            split = members[int(far.argmax())]
            centers[empty] = x[split]
            # hand the point over so repeated repairs pick fresh donors
            assign[split] = empty
            counts[donor] -= 1
            counts[empty] += 1
    return centers, inertia


def pq_train(data, n_subspaces: int, n_bits: int, seed: int,
             geometry: GeometryTag | None = None) -> PQCodebook:
    """Train a product quantiser: independent k-means per subspace.

    Each subspace runs k-means with k = 2^n_bits in plain Euclidean
    geometry (assignment-time wraparound for torus data happens in
    pq_encode, where the topology matters).  Deterministic for a fixed
    seed; subspaces draw from independent seeded streams, so any parallel
    schedule would give identical codebooks.
    """
    if isinstance(data, EmbeddingSet):
        geometry = data.geometry if geometry is None else geometry
        x = np.asarray(data.vectors, dtype=np.float64)
    else:
        x, _ = as_float_batch(data)
        geometry = GeometryTag.EUCLIDEAN if geometry is None else geometry
    if not 1 <= n_bits <= 16:
        raise ValueError(f"bit width must be in 1..16, got {n_bits}")
    n, dim = x.shape
    k = 1 << n_bits
    if n < k:
        raise TooFewPointsError(
            f"training {k} centroids per subspace needs at least {k} points, "
            f"got {n}"
        )
    if dim % n_subspaces != 0:
        raise IndivisibleDimensionError(
            f"dimension {dim} is not divisible by {n_subspaces} subspaces"
        )
    subdim = dim // n_subspaces
    centroids = np.empty((n_subspaces, k, subdim), dtype=np.float64)
    for j in range(n_subspaces):
        rng = np.random.default_rng([seed, j])
        sub = x[:, j * subdim:(j + 1) * subdim]
        centroids[j], _ = _kmeans(sub, k, rng)
    return PQCodebook(
        n_subspaces=n_subspaces,
        n_bits=n_bits,
        centroids=centroids,
        geometry=geometry,
        seed=seed,
    )


def _subspace_sq_distances(sub: np.ndarray, centroids: np.ndarray,
                           torus: bool) -> np.ndarray:
    diff = sub[:, None, :] - centroids[None, :, :]
    if torus:
        diff = np.abs(diff)
        diff = np.minimum(diff, 1.0 - diff)
    return (diff * diff).sum(axis=2)


def pq_encode(data, codebook: PQCodebook) -> np.ndarray:
    """Code each subspace with its nearest centroid (ties: lowest index).

    Torus codebooks measure per-coordinate deltas with wraparound, so a
    point near 1.0 can be assigned to a centroid near 0.0.
    """
    x, was_1d = as_float_batch(data.vectors if isinstance(data, EmbeddingSet)
                               else data)
    if x.shape[1] != codebook.dim:
        raise DimensionMismatchError(
            f"expected dimension {codebook.dim}, got {x.shape[1]}"
        )
    torus = codebook.geometry == GeometryTag.FLAT_TORUS
    sd = codebook.subdim
    codes = np.empty((x.shape[0], codebook.n_subspaces),
                     dtype=_code_dtype(codebook.n_bits))
    for j in range(codebook.n_subspaces):
        d2 = _subspace_sq_distances(
            x[:, j * sd:(j + 1) * sd], codebook.centroids[j], torus
        )
        codes[:, j] = d2.argmin(axis=1)
    return codes[0] if was_1d else codes


def pq_decode(codes, codebook: PQCodebook) -> np.ndarray:
    """Concatenate the centroids named by each code.

    Torus reconstructions are reduced mod 1 into [0, 1).  Unit-norm
    reconstructions are returned raw (the exact centroid concatenation,
    a fixed point of pq_encode); renormalise before distance evaluation.
    """
    arr, was_1d = as_code_batch(codes)
    if arr.shape[1] != codebook.n_subspaces:
        raise DimensionMismatchError(
            f"expected {codebook.n_subspaces} codes per vector, got {arr.shape[1]}"
        )
    if arr.size and int(arr.max()) >= codebook.k:
        raise ValueError(f"codes exceed the codebook size {codebook.k}")
    sd = codebook.subdim
    out = np.empty((arr.shape[0], codebook.dim), dtype=np.float64)
    for j in range(codebook.n_subspaces):
        out[:, j * sd:(j + 1) * sd] = codebook.centroids[j][arr[:, j]]
    if codebook.geometry == GeometryTag.FLAT_TORUS:
        out = np.mod(out, 1.0)
        out[out >= 1.0] = 0.0
    return out[0] if was_1d else out


# ---------------------------------------------------------------------------
# embedding-set routing


def _float_rep_for_quantization(dataset: EmbeddingSet) -> EmbeddingSet:
    """The representation a quantiser consumes: Clifford sets are converted
    to flat-torus coordinates (halving the extrinsic dimension); sphere and
    flat-torus sets pass through."""
    if dataset.encoding != Encoding.FLOAT:
        raise IncompatibleGeometryError("expected a float embedding set")
    if dataset.geometry == GeometryTag.CLIFFORD:
        return EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=clifford_to_flat(dataset.vectors),
            labels=dataset.labels,
        )
    if dataset.geometry in (GeometryTag.HYPERSPHERE, GeometryTag.FLAT_TORUS):
        return dataset
    raise IncompatibleGeometryError(
        "quantisation applies to hypersphere, flat-torus, or Clifford sets"
    )


def quantize_set(dataset: EmbeddingSet, config: QuantConfig,
                 seed: int | None = None,
                 codebook: PQCodebook | None = None,
                 ) -> tuple[EmbeddingSet, PQCodebook | None]:
    """Apply a quantisation config to a float embedding set.

    8-bit grid and PQ quantise torus data in its flat representation
    (Clifford inputs are converted first, halving the stored dimension);
    1-bit grid codes the ambient unit-norm coordinates directly by sign,
    and flat-torus sets on their own wrapping 1-bit lattice.  PQ is trained
    on the dequantised 8-bit representation; pass a ``codebook`` to reuse
    one, otherwise ``seed`` is required to train.

    Returns the coded set and the codebook (None for grid configs).
    """
    if config is QuantConfig.GRID1:
        rep = dataset
        if rep.encoding != Encoding.FLOAT:
            raise IncompatibleGeometryError("expected a float embedding set")
        if rep.geometry == GeometryTag.EUCLIDEAN:
            raise IncompatibleGeometryError(
                "1-bit grid quantisation needs bounded coordinates"
            )
        codes = grid_quantize(rep.vectors, 1, rep.geometry)
        return EmbeddingSet(
            geometry=rep.geometry, vectors=codes, labels=rep.labels,
            encoding=Encoding.GRID, n_bits=1,
        ), None

    rep = _float_rep_for_quantization(dataset)
    if config is QuantConfig.GRID8:
        codes = grid_quantize(rep.vectors, 8, rep.geometry)
        return EmbeddingSet(
            geometry=rep.geometry, vectors=codes, labels=rep.labels,
            encoding=Encoding.GRID, n_bits=8,
        ), None

    # PQ: train/encode on the dequantised 8-bit representation
    snapped = grid_dequantize(
        grid_quantize(rep.vectors, 8, rep.geometry), rep.geometry, 8
    )
    if codebook is None:
        if seed is None:
            raise ValueError("training a PQ codebook requires a seed")
        codebook = pq_train(
            snapped, config.subspaces, config.index_bits, seed,
            geometry=rep.geometry,
        )
    else:
        if (codebook.n_subspaces, codebook.n_bits) != (
            config.subspaces, config.index_bits
        ) or codebook.geometry != rep.geometry or codebook.dim != rep.dim:
            raise ValueError("codebook does not match the config and data")
    codes = pq_encode(snapped, codebook)
    return EmbeddingSet(
        geometry=rep.geometry, vectors=codes, labels=rep.labels,
        encoding=Encoding.PQ, n_bits=config.index_bits,
    ), codebook


def dequantize_set(dataset: EmbeddingSet,
                   codebook: PQCodebook | None = None) -> EmbeddingSet:
    """Reconstruct a float embedding set for distance evaluation.

    Unit-norm reconstructions are renormalised to the hypersphere; torus
    reconstructions stay in [0, 1).
    """
    if dataset.encoding == Encoding.FLOAT:
        return dataset
    if dataset.encoding == Encoding.GRID:
        vectors = grid_dequantize(dataset.vectors, dataset.geometry,
                                  dataset.n_bits, renormalize=True)
        geometry = (GeometryTag.FLAT_TORUS
                    if dataset.geometry == GeometryTag.FLAT_TORUS
                    else GeometryTag.HYPERSPHERE)
        return EmbeddingSet(geometry=geometry, vectors=vectors,
                            labels=dataset.labels)
    if codebook is None:
        raise ValueError("decoding PQ codes requires their codebook")
    vectors = pq_decode(dataset.vectors, codebook)
    if codebook.geometry == GeometryTag.FLAT_TORUS:
        return EmbeddingSet(geometry=GeometryTag.FLAT_TORUS, vectors=vectors,
                            labels=dataset.labels)
    return EmbeddingSet(geometry=GeometryTag.HYPERSPHERE,
                        vectors=l2_normalize(vectors), labels=dataset.labels)


# ---------------------------------------------------------------------------
# estimator wrappers


class GridQuantizer(BaseEstimator, TransformerMixin):
    """Stateless n-bit grid quantiser with an sklearn transformer surface.

    ``transform`` returns integer codes; ``inverse_transform`` reconstructs
    coordinates (renormalised to unit norm for non-torus geometries).
    """

    def __init__(self, n_bits: int = 8, geometry: str = "flat-torus"):
        self.n_bits = n_bits
        self.geometry = geometry

    def _tag(self) -> GeometryTag:
        return GeometryTag.from_name(self.geometry)

    def fit(self, X, y=None):
        self._tag()
        if not 1 <= self.n_bits <= 16:
            raise ValueError(f"bit width must be in 1..16, got {self.n_bits}")
        return self

    def transform(self, X) -> np.ndarray:
        self.fit(X)
        return grid_quantize(X, self.n_bits, self._tag())

    def inverse_transform(self, codes, renormalize: bool = True) -> np.ndarray:
        return grid_dequantize(codes, self._tag(), self.n_bits,
                               renormalize=renormalize)


class ProductQuantizer(BaseEstimator, TransformerMixin):
    """Product quantiser with an sklearn estimator surface.

    After ``fit`` the trained codebook is available as ``codebook_``;
    ``transform`` encodes and ``inverse_transform`` decodes.
    """

    def __init__(self, n_subspaces: int = 8, n_bits: int = 8, seed: int = 0,
                 geometry: str = "euclidean"):
        self.n_subspaces = n_subspaces
        self.n_bits = n_bits
        self.seed = seed
        self.geometry = geometry

    def fit(self, X, y=None):
        self.codebook_ = pq_train(
            X, self.n_subspaces, self.n_bits, self.seed,
            geometry=GeometryTag.from_name(self.geometry),
        )
        return self

    def transform(self, X) -> np.ndarray:
        return pq_encode(X, self.codebook_)

    def inverse_transform(self, codes) -> np.ndarray:
        return pq_decode(codes, self.codebook_)
