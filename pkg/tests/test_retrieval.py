"""Retrieval tests: brute-force search against a pure-Python sort oracle,
precision@1, few-shot episodes, and the quantised evaluation pipeline."""

import numpy as np
import pytest

from toroidal import (
    DistanceKind,
    EmbeddingSet,
    GeometryTag,
    QuantConfig,
    eval_pipeline,
    few_shot_eval,
    flat_torus_distance,
    grid_dequantize,
    grid_quantize,
    knn_search,
    l2_normalize,
    l2p_project,
    precision_at_1,
)
from toroidal.exceptions import (
    IncompatibleGeometryError,
    InsufficientSupportError,
    KTooLargeError,
    MissingLabelsError,
)


def sphere_set(vectors, labels=None):
    return EmbeddingSet(geometry=GeometryTag.HYPERSPHERE,
                        vectors=l2_normalize(np.atleast_2d(vectors)),
                        labels=labels)


def torus_set(vectors, labels=None):
    return EmbeddingSet(geometry=GeometryTag.FLAT_TORUS,
                        vectors=np.atleast_2d(vectors), labels=labels)


class TestKnnSearch:
    def test_exact_match_ranks_first(self):
        rng = np.random.default_rng(0)
        index = sphere_set(rng.normal(size=(10, 4)))
        queries = EmbeddingSet(geometry=GeometryTag.HYPERSPHERE,
                               vectors=index.vectors[3:4])
        ids, dists = knn_search(queries, index, k=1)
        assert ids[0, 0] == 3
        assert dists[0, 0] <= 1e-12

    def test_full_ordering_is_permutation(self):
        rng = np.random.default_rng(1)
        index = torus_set(rng.random((7, 3)))
        queries = torus_set(rng.random((2, 3)))
        ids, _ = knn_search(queries, index, k=7, kind=DistanceKind.FLAT_TORUS_L2)
        for row in ids:
            assert sorted(row.tolist()) == list(range(7))

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(2)
        index_points = rng.random((20, 3))
        query_points = rng.random((5, 3))
        ids, _ = knn_search(torus_set(query_points), torus_set(index_points),
                            k=20, kind=DistanceKind.FLAT_TORUS_L1)
        for qi, q in enumerate(query_points):
            oracle = sorted(
                range(20),
                key=lambda j: (flat_torus_distance(q, index_points[j], p=1), j),
            )
            assert ids[qi].tolist() == oracle

    def test_ties_broken_by_lower_index(self):
        index = sphere_set(np.array([[1.0, 0], [0, 1.0], [1.0, 0]]))
        queries = sphere_set(np.array([[1.0, 0]]))
        ids, _ = knn_search(queries, index, k=3)
        assert ids[0].tolist() == [0, 2, 1]

    def test_k_too_large(self):
        index = sphere_set(np.eye(3))
        with pytest.raises(KTooLargeError):
            knn_search(index, index, k=4)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        index = torus_set(rng.random((30, 4)))
        queries = torus_set(rng.random((6, 4)))
        ids_l2, _ = knn_search(queries, index, k=30,
                               kind=DistanceKind.FLAT_TORUS_L2)
        ids_sq, _ = knn_search(queries, index, k=30,
                               kind=DistanceKind.FLAT_TORUS_L2_SQUARED)
        np.testing.assert_array_equal(ids_l2, ids_sq)

    def test_incompatible_geometry(self):
        with pytest.raises(IncompatibleGeometryError):
            knn_search(torus_set([[0.1]]), torus_set([[0.2]]),
                       k=1, kind=DistanceKind.COSINE)


class TestPrecisionAt1:
    def test_same_label_pair(self):
        dataset = sphere_set([[1.0, 0.0], [0.999, 0.04]], labels=[1, 1])
        assert precision_at_1(dataset) == 1.0

    def test_different_label_pair(self):
        dataset = sphere_set([[1.0, 0.0], [0.999, 0.04]], labels=[1, 2])
        assert precision_at_1(dataset) == 0.0

    def test_two_tight_pairs_far_apart(self):
        dataset = sphere_set(
            [[1.0, 0.001], [1.0, -0.001], [-1.0, 0.001], [-1.0, -0.001]],
            labels=[0, 0, 1, 1],
        )
        assert precision_at_1(dataset) == 1.0

    def test_invariant_under_relabeling(self):
        rng = np.random.default_rng(4)
        vectors = rng.normal(size=(40, 5))
        labels = rng.integers(0, 4, 40)
        permutation = np.array([3, 0, 2, 1])
        a = precision_at_1(sphere_set(vectors, labels))
        b = precision_at_1(sphere_set(vectors, permutation[labels]))
        assert a == b

    def test_missing_labels(self):
        with pytest.raises(MissingLabelsError):
            precision_at_1(sphere_set(np.eye(3)))


class TestFewShotEval:
    def test_every_point_its_own_class(self):
        rng = np.random.default_rng(5)
        dataset = sphere_set(rng.normal(size=(12, 6)), labels=np.arange(12))
        assert few_shot_eval(dataset, None, n_shot=1, n_episodes=3, seed=0) == 1.0

    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(6)
        n_classes, per_class = 8, 40
        train = sphere_set(
            rng.normal(size=(n_classes * per_class, 16)),
            labels=rng.permutation(np.repeat(np.arange(n_classes), per_class)),
        )
        test = sphere_set(
            rng.normal(size=(160, 16)),
            labels=rng.integers(0, n_classes, 160),
        )
        accuracy = few_shot_eval(train, test, n_shot=5, n_episodes=10, seed=1)
        chance = 1.0 / n_classes
        assert abs(accuracy - chance) < 0.08

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(7)
        dataset = sphere_set(rng.normal(size=(30, 4)),
                             labels=np.repeat(np.arange(3), 10))
        first = few_shot_eval(dataset, None, n_shot=2, n_episodes=5, seed=9)
        second = few_shot_eval(dataset, None, n_shot=2, n_episodes=5, seed=9)
        assert first == second

    def test_insufficient_support(self):
        dataset = sphere_set(np.eye(3), labels=[0, 0, 1])
        with pytest.raises(InsufficientSupportError):
            few_shot_eval(dataset, None, n_shot=2, n_episodes=1, seed=0)

    def test_flat_torus_sets_supported(self):
        rng = np.random.default_rng(8)
        labels = np.repeat([0, 1], 10)
        vectors = np.where(labels[:, None] == 0,
                           rng.normal(0.2, 0.02, (20, 3)),
                           rng.normal(0.7, 0.02, (20, 3))) % 1.0
        dataset = torus_set(vectors, labels=labels)
        accuracy = few_shot_eval(dataset, None, n_shot=3, n_episodes=4, seed=3)
        assert accuracy == 1.0


class TestEvalPipeline:
    def _trained_torus_like(self, seed=0, n=160, dim=8):
        rng = np.random.default_rng(seed)
        labels = np.repeat(np.arange(4), n // 4)
        centres = rng.normal(size=(4, dim))
        raw = centres[labels] + 0.25 * rng.normal(size=(n, dim))
        return EmbeddingSet(geometry=GeometryTag.CLIFFORD,
                            vectors=l2p_project(raw), labels=labels)

    def test_unquantised_matches_precision_at_1(self):
        dataset = self._trained_torus_like()
        reports = eval_pipeline(dataset, quant=None)
        by_metric = {r.metric: r.value for r in reports}
        assert by_metric["precision_at_1"] == precision_at_1(dataset)
        assert 0.0 <= by_metric["circular_variance"] <= 1.0

    def test_grid8_int_path_matches_float_path(self):
        dataset = self._trained_torus_like(seed=1)
        reports = eval_pipeline(dataset, quant=QuantConfig.GRID8)
        by_metric = {r.metric: r.value for r in reports}
        assert by_metric["precision_at_1[torus-l1-int]"] \
            == by_metric["precision_at_1[torus-l1]"]
        assert "precision_at_1[cosine]" in by_metric

    def test_grid1_reports_hamming(self):
        dataset = self._trained_torus_like(seed=2)
        reports = eval_pipeline(dataset, quant=QuantConfig.GRID1)
        assert [r.metric for r in reports] == ["precision_at_1[hamming]"]
        assert 0.0 <= reports[0].value <= 1.0

    def test_stored_codes_evaluate_without_circular_variance(self):
        from toroidal import quantize_set
        coded, _ = quantize_set(self._trained_torus_like(seed=5),
                                QuantConfig.GRID1)
        reports = eval_pipeline(coded, quant=None)
        assert [r.metric for r in reports] == ["precision_at_1"]

    def test_pq_with_one_centroid_per_point_is_lossless(self):
        # 16 distinct points, PQ with 16 centroids per 1-D subspace: the
        # snapped 8-bit data reconstructs exactly, so precision matches the
        # unquantised value on this well-separated instance
        rng = np.random.default_rng(9)
        labels = np.repeat(np.arange(4), 4)
        centres = np.eye(4)
        raw = centres[labels] + 0.01 * rng.normal(size=(16, 4))
        dataset = EmbeddingSet(geometry=GeometryTag.HYPERSPHERE,
                               vectors=l2_normalize(raw), labels=labels)
        snapped = grid_dequantize(
            grid_quantize(dataset.vectors, 8, GeometryTag.HYPERSPHERE),
            GeometryTag.HYPERSPHERE, 8, renormalize=False,
        )
        assert np.unique(snapped, axis=0).shape[0] == 16
        reports = eval_pipeline(dataset, quant=QuantConfig.PQ_4X4, seed=0)
        assert reports[0].metric == "precision_at_1[cosine]"
        assert reports[0].value == precision_at_1(dataset)
        assert precision_at_1(dataset) == 1.0

    def test_reports_carry_descriptor(self):
        dataset = self._trained_torus_like(seed=3)
        reports = eval_pipeline(dataset, quant=QuantConfig.GRID8,
                                koleo_weight=0.25, seed=4)
        for report in reports:
            assert report.geometry == "clifford"
            assert report.dim == dataset.dim
            assert report.quant == "grid8"
            assert report.koleo_weight == 0.25
            assert report.seed == 4

    def test_missing_labels_rejected(self):
        dataset = EmbeddingSet(geometry=GeometryTag.HYPERSPHERE,
                               vectors=np.eye(4))
        with pytest.raises(MissingLabelsError):
            eval_pipeline(dataset, None)

    def test_report_bounds_enforced(self):
        from toroidal import EvalReport
        with pytest.raises(ValueError):
            EvalReport(metric="precision_at_1", value=1.5,
                       geometry="clifford", dim=4)
