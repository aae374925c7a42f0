"""Binary persistence for embedding sets and PQ codebooks, plus run manifests.

All numeric fields are little-endian.  Embedding files carry a 25-byte
header::

    magic   8 bytes  "TOREMB01"
    u8      geometry tag (0 euclidean, 1 hypersphere, 2 flat torus, 3 clifford)
    u8      payload dtype (0 f32, 1 u8 grid, 2 bit-packed 1-bit, 3 PQ codes)
    u16     reserved, must be 0
    u32     dim (stored extrinsic dimension; subspace count for PQ codes)
    u64     N
    u8      has_labels flag

followed by the row-major payload and, when flagged, N u32 labels.  1-bit
codes are packed most-significant-bit first, each vector padded to a whole
byte.  Codebook files use magic "TORPQ01\\0", then u32 subspace count,
u32 index bits, u32 subspace dimension, u8 geometry tag, u64 training
seed, and the centroids as f32 row-major.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .data import EmbeddingSet, Encoding
from .exceptions import (
    BadMagicError,
    FileFormatError,
    TruncatedFileError,
)
from .geometry import GeometryTag
from .quantization import PQCodebook
from ._version import __version__

EMBEDDING_MAGIC = b"TOREMB01"
CODEBOOK_MAGIC = b"TORPQ01\x00"
_HEADER = struct.Struct("<8sBBHIQB")
_CB_HEADER = struct.Struct("<8sIIIBQ")

DTYPE_F32 = 0
DTYPE_U8 = 1
DTYPE_BITS = 2
DTYPE_PQ = 3

# stored float data only resolves to f32, so invariants are checked loosely
LOAD_ATOL = 1e-6


def _payload_dtype(dataset: EmbeddingSet) -> int:
    if dataset.encoding == Encoding.FLOAT:
        return DTYPE_F32
    if dataset.encoding == Encoding.PQ:
        if dataset.n_bits > 8:
            raise FileFormatError(
                "PQ codes wider than 8 bits are not persistable"
            )
        return DTYPE_PQ
    if dataset.n_bits == 8:
        return DTYPE_U8
    if dataset.n_bits == 1:
        return DTYPE_BITS
    raise FileFormatError(
        f"{dataset.n_bits}-bit grid codes are not persistable; "
        "only 8-bit and 1-bit grids have a file encoding"
    )


def save_embeddings(dataset: EmbeddingSet, path) -> None:
    """Write an embedding set; the byte stream is a pure function of the
    set's contents, so identical sets produce identical files."""
    dtype = _payload_dtype(dataset)
    if dtype == DTYPE_F32:
        payload = dataset.vectors.astype("<f4").tobytes(order="C")
    elif dtype == DTYPE_BITS:
        payload = np.packbits(dataset.vectors.astype(np.uint8), axis=1).tobytes(
            order="C"
        )
    else:
        payload = dataset.vectors.astype("<u1").tobytes(order="C")
    header = _HEADER.pack(
        EMBEDDING_MAGIC,
        int(dataset.geometry),
        dtype,
        0,
        dataset.dim,
        dataset.n,
        0 if dataset.labels is None else 1,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if dataset.labels is not None:
            fh.write(dataset.labels.astype("<u4").tobytes(order="C"))


def load_embeddings(path) -> EmbeddingSet:
    """Read an embedding set, validating the header, payload length, and
    the geometry invariants of float data (to f32 resolution)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the header")
    magic, geom_byte, dtype, reserved, dim, n, has_labels = _HEADER.unpack_from(blob)
    if magic != EMBEDDING_MAGIC:
        raise BadMagicError(f"{path}: not an embedding file")
    if reserved != 0:
        raise FileFormatError(f"{path}: reserved field must be 0")
    if dim < 1 or n < 1:
        raise FileFormatError(f"{path}: dim and N must be positive")
    if has_labels not in (0, 1):
        raise FileFormatError(f"{path}: bad has_labels flag {has_labels}")
    try:
        geometry = GeometryTag(geom_byte)
    except ValueError:
        raise FileFormatError(f"{path}: unknown geometry tag {geom_byte}") from None

    if dtype == DTYPE_F32:
        row_bytes = 4 * dim
    elif dtype == DTYPE_BITS:
        row_bytes = (dim + 7) // 8
    elif dtype in (DTYPE_U8, DTYPE_PQ):
        row_bytes = dim
    else:
        raise FileFormatError(f"{path}: unknown payload dtype {dtype}")
    payload_len = row_bytes * n
    expected = _HEADER.size + payload_len + (4 * n if has_labels else 0)
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes, found {len(blob)}"
        )
    if len(blob) > expected:
        raise FileFormatError(f"{path}: {len(blob) - expected} trailing bytes")

    raw = blob[_HEADER.size:_HEADER.size + payload_len]
    if dtype == DTYPE_F32:
        vectors = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        vectors = vectors.reshape(n, dim)
        encoding, n_bits = Encoding.FLOAT, None
    elif dtype == DTYPE_BITS:
        packed = np.frombuffer(raw, dtype=np.uint8).reshape(n, row_bytes)
        vectors = np.unpackbits(packed, axis=1, count=dim)
        encoding, n_bits = Encoding.GRID, 1
    elif dtype == DTYPE_U8:
        vectors = np.frombuffer(raw, dtype=np.uint8).reshape(n, dim)
        encoding, n_bits = Encoding.GRID, 8
    else:
        vectors = np.frombuffer(raw, dtype=np.uint8).reshape(n, dim)
        encoding, n_bits = Encoding.PQ, 8

    labels = None
    if has_labels:
        labels = np.frombuffer(blob[_HEADER.size + payload_len:], dtype="<u4")
    return EmbeddingSet(
        geometry=geometry,
        vectors=vectors,
        labels=labels,
        encoding=encoding,
        n_bits=n_bits,
        atol=LOAD_ATOL,
    )


def save_codebook(codebook: PQCodebook, path) -> None:
    header = _CB_HEADER.pack(
        CODEBOOK_MAGIC,
        codebook.n_subspaces,
        codebook.n_bits,
        codebook.subdim,
        int(codebook.geometry),
        codebook.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(codebook.centroids.astype("<f4").tobytes(order="C"))


def load_codebook(path) -> PQCodebook:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CB_HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the header")
    magic, m, n_bits, subdim, geom_byte, seed = _CB_HEADER.unpack_from(blob)
    if magic != CODEBOOK_MAGIC:
        raise BadMagicError(f"{path}: not a codebook file")
    if not (m >= 1 and 1 <= n_bits <= 16 and subdim >= 1):
        raise FileFormatError(f"{path}: invalid codebook header")
    try:
        geometry = GeometryTag(geom_byte)
    except ValueError:
        raise FileFormatError(f"{path}: unknown geometry tag {geom_byte}") from None
    expected = _CB_HEADER.size + 4 * m * (1 << n_bits) * subdim
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes, found {len(blob)}"
        )
    if len(blob) > expected:
        raise FileFormatError(f"{path}: {len(blob) - expected} trailing bytes")
    centroids = np.frombuffer(blob[_CB_HEADER.size:], dtype="<f4").astype(
        np.float64
    ).reshape(m, 1 << n_bits, subdim)
    return PQCodebook(n_subspaces=m, n_bits=n_bits, centroids=centroids,
                      geometry=geometry, seed=seed)


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run bit-identically."""

    command: str
    seed: int
    config: dict
    dataset: dict
    artifacts: dict
    library_version: str = __version__

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            record = json.load(fh)
        return cls(**record)
