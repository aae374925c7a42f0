"""Distance tests: trivial values, independent oracles for the derived ones,
metric axioms, the integer fast path, and the cc-norm expansions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toroidal import (
    DistanceKind,
    EmbeddingSet,
    GeometryTag,
    cc_norm,
    cosine_distance,
    distance_distribution_sim,
    flat_to_clifford,
    flat_torus_distance,
    hamming_distance,
    int_torus_distance,
    l2_normalize,
    pairwise_distances,
)
from toroidal.data import Encoding
from toroidal.exceptions import (
    BitWidthMismatchError,
    DimensionMismatchError,
    IncompatibleGeometryError,
)
from toroidal.metrics import _int_accum_capacity


def torus_distance_oracle(a, b, p):
    """Exhaustively choose the shorter direction per dimension."""
    total = 0.0
    for x, y in zip(a, b):
        forward = (y - x) % 1.0
        backward = (x - y) % 1.0
        total += min(forward, backward) ** p
    return total ** (1.0 / p)


class TestCosineDistance:
    def test_identical_is_zero(self):
        v = l2_normalize([1.0, 2.0, 2.0])
        assert cosine_distance(v, v) <= 1e-12

    def test_antipodal_is_two(self):
        v = l2_normalize([0.3, -0.4])
        assert cosine_distance(v, -v) == pytest.approx(2.0, abs=1e-12)

    def test_orthogonal_pair(self):
        assert cosine_distance([0.0, 1.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])


class TestFlatTorusDistance:
    def test_wraparound_shorter_path(self):
        assert flat_torus_distance([0.1], [0.9], p=1) == pytest.approx(0.2)

    def test_l2_against_oracle(self):
        value = flat_torus_distance([0.0, 0.0], [0.5, 0.5], p=2)
        assert value == pytest.approx(torus_distance_oracle([0, 0], [0.5, 0.5], 2))
        assert value == pytest.approx(0.70711, abs=1e-5)

    def test_identical_is_zero(self):
        assert flat_torus_distance([0.3, 0.7], [0.3, 0.7], p=2) == 0.0

    def test_random_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(1, 8))
            a, b = rng.random(d), rng.random(d)
            for p in (1, 2):
                assert flat_torus_distance(a, b, p) == pytest.approx(
                    torus_distance_oracle(a, b, p), abs=1e-12
                )

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    def test_metric_axioms(self, seed, d):
        rng = np.random.default_rng(seed)
        a, b, c = rng.random((3, d))
        for p in (1, 2):
            dab = flat_torus_distance(a, b, p)
            assert dab >= 0.0
            assert dab == pytest.approx(flat_torus_distance(b, a, p), abs=1e-12)
            assert flat_torus_distance(a, a, p) == 0.0
            dac = flat_torus_distance(a, c, p)
            dcb = flat_torus_distance(c, b, p)
            assert dab <= dac + dcb + 1e-12


class TestIntTorusDistance:
    def test_wraparound_example(self):
        assert int_torus_distance([250], [5], n_bits=8, p=1) == 11

    def test_antipodal_maximum(self):
        assert int_torus_distance([0], [128], n_bits=8, p=1) == 128

    def test_identical_is_zero(self):
        assert int_torus_distance([7, 200], [7, 200], n_bits=8, p=2) == 0

    def test_per_dim_never_exceeds_half_range(self):
        rng = np.random.default_rng(1)
        for n_bits in (1, 4, 8, 12, 16):
            codes = rng.integers(0, 1 << n_bits, size=(40, 2, 1), dtype=np.uint64)
            for a, b in codes:
                delta = int_torus_distance(a, b, n_bits=n_bits, p=1)
                assert delta <= 1 << (n_bits - 1)

    def test_native_uint8_wrapping_matches(self):
        # stored as uint8, the subtraction overflows natively; the kernel
        # must agree with explicit modulo arithmetic
        rng = np.random.default_rng(2)
        a = rng.integers(0, 256, size=64, dtype=np.uint8)
        b = rng.integers(0, 256, size=64, dtype=np.uint8)
        expected = sum(
            min((int(x) - int(y)) % 256, (int(y) - int(x)) % 256)
            for x, y in zip(a, b)
        )
        assert int_torus_distance(a, b, n_bits=8, p=1) == expected

    def test_scale_consistency_with_float_path(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            d = int(rng.integers(1, 12))
            codes_a = rng.integers(0, 256, size=d)
            codes_b = rng.integers(0, 256, size=d)
            int_l1 = int_torus_distance(codes_a, codes_b, n_bits=8, p=1)
            float_l1 = flat_torus_distance(codes_a / 256.0, codes_b / 256.0, p=1)
            assert int_l1 / 256.0 == pytest.approx(float_l1, abs=1e-9)

    def test_squared_accumulation_for_p2(self):
        assert int_torus_distance([0, 0], [3, 4], n_bits=8, p=2) == 25

    def test_code_range_enforced(self):
        with pytest.raises(BitWidthMismatchError):
            int_torus_distance([16], [3], n_bits=4, p=1)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            int_torus_distance([1, 2], [1], n_bits=8)

    def test_accumulator_capacity(self):
        # n=8, p=1: worst per-dim term is 128, so the u64 budget is 2^64/128
        assert _int_accum_capacity(8, 1) == (2**64 - 1) // 128
        assert _int_accum_capacity(8, 2) == (2**64 - 1) // 128**2


class TestHammingDistance:
    def test_identical(self):
        assert hamming_distance([0, 1, 1, 0], [0, 1, 1, 0]) == 0

    def test_two_bit_difference(self):
        assert hamming_distance([0, 1, 1, 0], [1, 1, 0, 0]) == 2

    def test_all_differing(self):
        d = 37
        assert hamming_distance(np.zeros(d, int), np.ones(d, int)) == d

    def test_matches_naive_count(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 2, size=100)
        b = rng.integers(0, 2, size=100)
        assert hamming_distance(a, b) == int((a != b).sum())


class TestCcNorm:
    def test_origin(self):
        assert cc_norm([0.0, 0.0]) == 0.0

    def test_midpoint_maximum(self):
        assert cc_norm([0.5, 0.5, 0.5]) == pytest.approx(6.0)

    def test_quarter_turn(self):
        assert cc_norm([0.25]) == pytest.approx(1.0)

    def test_equals_scaled_cosine_distance_to_origin(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            d = int(rng.integers(1, 9))
            a = rng.random(d)
            lifted = flat_to_clifford(a)
            origin = flat_to_clifford(np.zeros(d))
            assert cc_norm(a) == pytest.approx(
                d * cosine_distance(lifted, origin), abs=1e-9
            )

    def test_cosine_distance_decomposes_over_pairs(self):
        # 1 - <z_a, z_b> = mean_d (1 - cos 2 pi (a_d - b_d))
        rng = np.random.default_rng(6)
        for _ in range(20):
            d = int(rng.integers(1, 9))
            a, b = rng.random(d), rng.random(d)
            lhs = cosine_distance(flat_to_clifford(a), flat_to_clifford(b))
            rhs = np.mean(1.0 - np.cos(2 * np.pi * (a - b)))
            assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_quadratic_near_origin(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            d = int(rng.integers(1, 9))
            # angles up to 1e-3 rad, i.e. flat coordinates up to 1e-3/(2 pi)
            angles = rng.uniform(1e-9, 1e-3, size=d) * rng.choice([-1, 1], d)
            coords = (angles / (2 * np.pi)) % 1.0
            ratio = cc_norm(coords) / (0.5 * (angles**2).sum())
            assert 0.999 <= ratio <= 1.001

    def test_linear_near_midpoint(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            d = int(rng.integers(1, 9))
            delta = rng.uniform(1e-6, 1e-3, size=d) * rng.choice([-1, 1], d)
            base = np.full(d, 0.25)
            deviation = cc_norm(base + delta) - cc_norm(base)
            linear = (2 * np.pi * delta).sum()
            assert abs(deviation - linear) <= 1e-3 * np.abs(2 * np.pi * delta).sum()


def _torus_set(vectors, labels=None):
    return EmbeddingSet(geometry=GeometryTag.FLAT_TORUS,
                        vectors=np.atleast_2d(vectors), labels=labels)


class TestPairwiseDistances:
    def test_single_point_zero_matrix(self):
        matrix = pairwise_distances(_torus_set([[0.3]]), DistanceKind.FLAT_TORUS_L1)
        assert matrix.shape == (1, 1) and matrix[0, 0] == 0.0

    def test_identical_vectors_zero(self):
        dataset = EmbeddingSet(
            geometry=GeometryTag.HYPERSPHERE,
            vectors=np.array([[0.6, 0.8], [0.6, 0.8]]),
        )
        matrix = pairwise_distances(dataset, DistanceKind.COSINE)
        np.testing.assert_allclose(matrix, 0.0, atol=1e-12)

    def test_matches_scalar_op_entrywise(self):
        rng = np.random.default_rng(9)
        points = rng.random((3, 4))
        matrix = pairwise_distances(_torus_set(points), DistanceKind.FLAT_TORUS_L1)
        for i in range(3):
            for j in range(3):
                expected = flat_torus_distance(points[i], points[j], p=1)
                assert matrix[i, j] == pytest.approx(expected, abs=1e-12)

    def test_symmetry_zero_diag_nonnegative(self):
        rng = np.random.default_rng(10)
        dataset = EmbeddingSet(
            geometry=GeometryTag.HYPERSPHERE,
            vectors=l2_normalize(rng.normal(size=(40, 6))),
        )
        matrix = pairwise_distances(dataset, DistanceKind.COSINE)
        np.testing.assert_array_equal(matrix, matrix.T)
        assert np.all(np.diag(matrix) == 0.0)
        assert np.all(matrix >= 0.0)

    def test_grid_codes_use_integer_kernel(self):
        rng = np.random.default_rng(11)
        codes = rng.integers(0, 256, size=(6, 5), dtype=np.uint8)
        dataset = EmbeddingSet(geometry=GeometryTag.FLAT_TORUS, vectors=codes,
                               encoding=Encoding.GRID, n_bits=8)
        matrix = pairwise_distances(dataset, DistanceKind.FLAT_TORUS_L1)
        for i in range(6):
            for j in range(6):
                assert matrix[i, j] == int_torus_distance(
                    codes[i], codes[j], n_bits=8, p=1
                )

    def test_incompatible_kind_rejected(self):
        with pytest.raises(IncompatibleGeometryError):
            pairwise_distances(_torus_set([[0.1, 0.2]]), DistanceKind.COSINE)


class TestDistanceDistributionSim:
    def test_one_dim_l1_normalised_mean(self):
        # per-dim toroidal distance of a uniform pair is Uniform(0, 0.5),
        # so the mean normalised by the diameter 0.5 sits at 0.5
        result = distance_distribution_sim(
            GeometryTag.FLAT_TORUS, 1, 10000, seed=0,
            kind=DistanceKind.FLAT_TORUS_L1,
        )
        assert result.mean == pytest.approx(0.5, abs=0.02)
        assert result.counts.sum() == 10000

    def test_single_pair_deterministic(self):
        first = distance_distribution_sim(GeometryTag.HYPERSPHERE, 4, 1, seed=7)
        second = distance_distribution_sim(GeometryTag.HYPERSPHERE, 4, 1, seed=7)
        assert first.mean == second.mean
        np.testing.assert_array_equal(first.counts, second.counts)

    @pytest.mark.parametrize("geometry,kind", [
        (GeometryTag.HYPERSPHERE, DistanceKind.COSINE),
        (GeometryTag.FLAT_TORUS, DistanceKind.FLAT_TORUS_L1),
        (GeometryTag.FLAT_TORUS, DistanceKind.FLAT_TORUS_L2),
        (GeometryTag.CLIFFORD, DistanceKind.COSINE),
    ])
    def test_std_decreases_with_dimension(self, geometry, kind):
        stds = [
            distance_distribution_sim(geometry, d, 4000, seed=13, kind=kind).std
            for d in (2, 16, 128)
        ]
        assert stds[0] > stds[1] > stds[2]

    def test_euclidean_rejected(self):
        with pytest.raises(IncompatibleGeometryError):
            distance_distribution_sim(GeometryTag.EUCLIDEAN, 2, 10, seed=0)

    def test_csv_output(self, tmp_path):
        result = distance_distribution_sim(GeometryTag.FLAT_TORUS, 2, 100, seed=1)
        path = tmp_path / "hist.csv"
        result.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin_left,bin_right,count"
        assert len(lines) == 51
        assert sum(int(line.split(",")[2]) for line in lines[1:]) == 100
        left, right, _ = lines[1].split(",")
        assert float(left) == 0.0 and float(right) == 0.02  # plain scalars
