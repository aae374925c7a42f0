"""File-format tests: round trips for every payload dtype, header
validation, exact payload arithmetic, and manifest persistence."""

import dataclasses

import numpy as np
import pytest

from toroidal import (
    EmbeddingSet,
    GeometryTag,
    PQCodebook,
    RunManifest,
    l2_normalize,
    load_codebook,
    load_embeddings,
    pq_train,
    save_codebook,
    save_embeddings,
)
from toroidal.data import Encoding
from toroidal.exceptions import (
    BadMagicError,
    FileFormatError,
    InvariantViolationError,
    TruncatedFileError,
)


def f32_sphere_set(n=20, d=5, seed=0, labels=True):
    rng = np.random.default_rng(seed)
    vectors = l2_normalize(rng.normal(size=(n, d))).astype(np.float32)
    vectors = l2_normalize(vectors.astype(np.float64))  # valid at 1e-9 again
    return EmbeddingSet(
        geometry=GeometryTag.HYPERSPHERE,
        vectors=vectors,
        labels=rng.integers(0, 4, n) if labels else None,
    )


class TestEmbeddingRoundTrips:
    def test_float_round_trip(self, tmp_path):
        dataset = EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=np.random.default_rng(0).random((10, 3)).astype(
                np.float32).astype(np.float64),
            labels=np.arange(10),
        )
        path = tmp_path / "t.emb"
        save_embeddings(dataset, path)
        loaded = load_embeddings(path)
        np.testing.assert_array_equal(loaded.vectors, dataset.vectors)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)
        assert loaded.geometry == GeometryTag.FLAT_TORUS
        assert loaded.encoding == Encoding.FLOAT

    def test_save_load_save_is_byte_identical(self, tmp_path):
        dataset = f32_sphere_set()
        first = tmp_path / "a.emb"
        second = tmp_path / "b.emb"
        save_embeddings(dataset, first)
        save_embeddings(load_embeddings(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_u8_grid_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        dataset = EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=rng.integers(0, 256, (12, 7), dtype=np.uint8),
            encoding=Encoding.GRID, n_bits=8,
        )
        path = tmp_path / "g.emb"
        save_embeddings(dataset, path)
        loaded = load_embeddings(path)
        np.testing.assert_array_equal(loaded.vectors, dataset.vectors)
        assert loaded.n_bits == 8

    def test_bit_packed_round_trip_with_padding(self, tmp_path):
        rng = np.random.default_rng(2)
        dataset = EmbeddingSet(
            geometry=GeometryTag.HYPERSPHERE,
            vectors=rng.integers(0, 2, (9, 13), dtype=np.uint8),
            encoding=Encoding.GRID, n_bits=1,
        )
        path = tmp_path / "b.emb"
        save_embeddings(dataset, path)
        loaded = load_embeddings(path)
        np.testing.assert_array_equal(loaded.vectors, dataset.vectors)
        assert loaded.n_bits == 1 and loaded.dim == 13

    def test_pq_codes_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        dataset = EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=rng.integers(0, 16, (8, 4), dtype=np.uint8),
            encoding=Encoding.PQ, n_bits=4,
        )
        path = tmp_path / "p.emb"
        save_embeddings(dataset, path)
        loaded = load_embeddings(path)
        np.testing.assert_array_equal(loaded.vectors, dataset.vectors)
        assert loaded.encoding == Encoding.PQ

    def test_unsupported_grid_width_rejected(self, tmp_path):
        dataset = EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=np.zeros((2, 2), dtype=np.uint8),
            encoding=Encoding.GRID, n_bits=4,
        )
        with pytest.raises(FileFormatError):
            save_embeddings(dataset, tmp_path / "x.emb")


class TestHeaderValidation:
    def test_payload_size_arithmetic(self, tmp_path):
        rng = np.random.default_rng(4)
        dataset = EmbeddingSet(
            geometry=GeometryTag.FLAT_TORUS,
            vectors=rng.integers(0, 256, (1000, 64), dtype=np.uint8),
            labels=rng.integers(0, 10, 1000),
            encoding=Encoding.GRID, n_bits=8,
        )
        path = tmp_path / "big.emb"
        save_embeddings(dataset, path)
        assert path.stat().st_size == 25 + 64_000 + 4_000

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"NOTEMB01" + bytes(40))
        with pytest.raises(BadMagicError):
            load_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        dataset = f32_sphere_set()
        path = tmp_path / "t.emb"
        save_embeddings(dataset, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(TruncatedFileError):
            load_embeddings(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        dataset = f32_sphere_set()
        path = tmp_path / "t.emb"
        save_embeddings(dataset, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FileFormatError):
            load_embeddings(path)

    def test_reserved_field_enforced(self, tmp_path):
        dataset = f32_sphere_set()
        path = tmp_path / "t.emb"
        save_embeddings(dataset, path)
        blob = bytearray(path.read_bytes())
        blob[10] = 1  # reserved u16 starts at offset 10
        path.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError):
            load_embeddings(path)

    def test_stored_invariants_checked(self, tmp_path):
        dataset = EmbeddingSet(
            geometry=GeometryTag.EUCLIDEAN,
            vectors=np.full((4, 3), 7.0),
        )
        path = tmp_path / "t.emb"
        save_embeddings(dataset, path)
        blob = bytearray(path.read_bytes())
        blob[8] = int(GeometryTag.HYPERSPHERE)  # retag non-unit data
        path.write_bytes(bytes(blob))
        with pytest.raises(InvariantViolationError):
            load_embeddings(path)


class TestCodebookFiles:
    def _codebook(self):
        rng = np.random.default_rng(5)
        return pq_train(rng.random((64, 6)), n_subspaces=2, n_bits=3, seed=9,
                        geometry=GeometryTag.FLAT_TORUS)

    def test_round_trip(self, tmp_path):
        codebook = self._codebook()
        path = tmp_path / "cb.bin"
        save_codebook(codebook, path)
        loaded = load_codebook(path)
        assert (loaded.n_subspaces, loaded.n_bits, loaded.subdim) == (2, 3, 3)
        assert loaded.geometry == GeometryTag.FLAT_TORUS
        assert loaded.seed == 9
        np.testing.assert_allclose(loaded.centroids, codebook.centroids,
                                   atol=1e-6)

    def test_save_load_save_byte_identical(self, tmp_path):
        codebook = self._codebook()
        first, second = tmp_path / "a.bin", tmp_path / "b.bin"
        save_codebook(codebook, first)
        save_codebook(load_codebook(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "cb.bin"
        path.write_bytes(b"WRONG!!\x00" + bytes(64))
        with pytest.raises(BadMagicError):
            load_codebook(path)

    def test_truncated(self, tmp_path):
        codebook = self._codebook()
        path = tmp_path / "cb.bin"
        save_codebook(codebook, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedFileError):
            load_codebook(path)


class TestRunManifest:
    def test_round_trip(self, tmp_path):
        manifest = RunManifest(
            command="train",
            seed=7,
            config={"geometry": "torusN", "dim": 8},
            dataset={"n_classes": 10},
            artifacts={"embeddings": "out.emb"},
        )
        path = tmp_path / "m.json"
        manifest.save(path)
        loaded = RunManifest.load(path)
        assert dataclasses.asdict(loaded) == dataclasses.asdict(manifest)
