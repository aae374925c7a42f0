"""Embedding-set container and the synthetic clustered dataset."""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .exceptions import InvariantViolationError
from .geometry import GeometryTag, validate_geometry


class Encoding(enum.Enum):
    """How the vectors of an EmbeddingSet are represented."""

    FLOAT = "float"   # real coordinates satisfying the geometry invariants
    GRID = "grid"     # n-bit integer grid codes, one per dimension
    PQ = "pq"         # product-quantiser subspace indices


@dataclasses.dataclass(frozen=True)
class EmbeddingSet:
    """N vectors with a geometry tag, optional integer labels, and encoding.

    Instances are immutable: the arrays are copied on construction and
    marked read-only, so sets can be shared freely between threads.
    """

    geometry: GeometryTag
    vectors: np.ndarray
    labels: np.ndarray | None = None
    encoding: Encoding = Encoding.FLOAT
    n_bits: int | None = None
    atol: dataclasses.InitVar[float] = 1e-9

    def __post_init__(self, atol: float):
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2:
            raise InvariantViolationError(
                f"vectors must be a 2-D array, got ndim={vectors.ndim}"
            )
        if vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise InvariantViolationError("an embedding set cannot be empty")
        if self.encoding == Encoding.FLOAT:
            vectors = vectors.astype(np.float64, copy=True)
            validate_geometry(vectors, self.geometry, atol=atol)
            if self.n_bits is not None:
                raise InvariantViolationError("float sets carry no bit width")
        else:
            if self.n_bits is None or not 1 <= self.n_bits <= 16:
                raise InvariantViolationError(
                    f"coded sets need a bit width in 1..16, got {self.n_bits}"
                )
            if not np.issubdtype(vectors.dtype, np.unsignedinteger):
                raise InvariantViolationError(
                    f"coded sets need unsigned integer codes, got {vectors.dtype}"
                )
            vectors = vectors.copy()
            if vectors.size and int(vectors.max()) >= (1 << self.n_bits):
                raise InvariantViolationError(
                    f"codes exceed the declared {self.n_bits}-bit range"
                )
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.uint32).copy()
            if labels.shape != (vectors.shape[0],):
                raise InvariantViolationError(
                    f"labels must have shape ({vectors.shape[0]},), "
                    f"got {labels.shape}"
                )
            labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclasses.dataclass(frozen=True)
class SyntheticDataset:
    """Gaussian class clusters standing in for a real labelled corpus.

    Class centres are drawn from a unit Gaussian; points scatter around
    their centre with isotropic standard deviation ``spread``.  Everything
    is deterministic given ``seed``.
    """

    n_classes: int = 10
    n_per_class: int = 200
    dim: int = 32
    spread: float = 1.0
    seed: int = 0

    def _centers(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 0])
        return rng.normal(size=(self.n_classes, self.dim))

    def sample(self, split: int = 0,
               n_per_class: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Draw one split of the dataset.

        ``split`` salts the noise stream, so split 0 (train) and split 1
        (test) share class centres but never share points.
        """
        m = self.n_per_class if n_per_class is None else n_per_class
        rng = np.random.default_rng([self.seed, 1 + split])
        centers = self._centers()
        labels = np.repeat(np.arange(self.n_classes), m)
        noise = rng.normal(scale=self.spread, size=(labels.size, self.dim))
        return centers[labels] + noise, labels.astype(np.uint32)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
