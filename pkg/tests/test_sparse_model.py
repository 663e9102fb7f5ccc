import numpy as np
import pytest

from conftest import A, B, dense, random_matrix
from sparse_model import (
    InvalidVectorError,
    SparseVector,
    TokenMatrix,
    argmax_mask,
    dot,
    max_pool,
    sum_rows,
    weighted_sum,
)


def vec(mapping):
    return SparseVector.from_dict(mapping)


class TestSparseVector:
    def test_sorts_terms_and_drops_zeros(self):
        v = SparseVector([7, 2, 5], [1.0, 0.0, 3.0])
        assert v.terms.tolist() == [5, 7]
        assert v.weights.tolist() == [3.0, 1.0]
        assert v.weights.dtype == np.float32

    def test_lookup_of_absent_term_is_zero(self):
        v = vec({3: 1.5})
        assert v[3] == 1.5
        assert v[4] == 0.0
        assert v[0] == 0.0

    @pytest.mark.parametrize("terms, weights, invariant", [
        ([1], [-0.5], "negative weight"),
        ([1, 1], [1.0, 2.0], "duplicate term"),
        ([-1], [1.0], "negative term"),
        ([1], [float("nan")], "non-finite weight"),
        ([1], [1e39], "weight overflows float32"),
        ([1, 2], [1.0], "length mismatch"),
    ])
    def test_rejects_invalid_input(self, terms, weights, invariant):
        with pytest.raises(InvalidVectorError) as info:
            SparseVector(terms, weights)
        assert info.value.invariant == invariant

    def test_rejects_term_outside_vocabulary(self):
        with pytest.raises(InvalidVectorError) as info:
            SparseVector([10], [1.0], vocab_size=10)
        assert info.value.invariant == "term >= vocab_size"

    def test_large_weight_fits_float64(self):
        assert SparseVector([1], [1e39], dtype=np.float64)[1] == 1e39

    def test_arrays_are_read_only(self):
        v = vec({1: 1.0})
        with pytest.raises(ValueError):
            v.weights[0] = 2.0

    def test_equality_by_content(self):
        assert vec({1: 1.0, 2: 0.5}) == SparseVector([2, 1], [0.5, 1.0])
        assert vec({1: 1.0}) != vec({1: 2.0})


class TestDot:
    def test_examples(self):
        assert dot(vec({A: 1.0, B: 0.5}), vec({B: 1.0})) == 0.5
        assert dot(vec({}), vec({A: 3.0})) == 0.0
        assert dot(vec({A: 2.0}), vec({A: 2.0})) == 4.0

    def test_symmetric_and_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, b = random_matrix(rng, 30, 2, min_tokens=2).rows
            assert dot(a, b) == dot(b, a)
            assert dot(a, b) >= 0.0

    def test_matches_dense_product(self):
        rng = np.random.default_rng(5)
        m = random_matrix(rng, 25, 2, min_tokens=2)
        d = dense(m, 25)
        assert dot(m[0], m[1]) == pytest.approx(float(d[0] @ d[1]), abs=1e-9)


class TestPooling:
    def test_max_pool_examples(self):
        assert max_pool(TokenMatrix.from_lists([[(A, 1.0)], [(B, 1.0)]])).vector == vec({A: 1.0, B: 1.0})
        assert max_pool(TokenMatrix.from_lists([[(A, 1.0), (B, 2.0)], [(B, 0.5)]])).vector == vec({A: 1.0, B: 2.0})
        assert len(max_pool(TokenMatrix())) == 0

    def test_max_pool_matches_dense_max(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m = random_matrix(rng, 30, 8, min_tokens=1)
            pooled = max_pool(m).vector
            expected = dense(m, 30).max(axis=0)
            got = np.zeros(30)
            got[pooled.terms.astype(int)] = pooled.weights
            np.testing.assert_array_equal(got, expected)

    def test_sum_rows_examples(self, example_query):
        assert sum_rows(example_query).to_dict() == {A: 1.0, B: 2.5}
        assert sum_rows(TokenMatrix.from_lists([[(A, 1.0)]])).to_dict() == {A: 1.0}
        assert len(sum_rows(TokenMatrix())) == 0

    def test_sum_rows_keeps_float64(self, example_query):
        assert sum_rows(example_query).weights.dtype == np.float64


class TestArgmaxMask:
    def test_keeps_single_maximum(self):
        assert argmax_mask(vec({A: 1.0, B: 0.5})) == vec({A: 1.0})

    def test_empty(self):
        assert len(argmax_mask(vec({}))) == 0

    def test_tie_goes_to_smallest_term(self):
        assert argmax_mask(vec({A: 2.0, B: 2.0})) == vec({A: 2.0})
        assert argmax_mask(vec({9: 1.0, 4: 1.0, 6: 0.5})) == vec({4: 1.0})

    def test_mask_is_dominated_by_input(self):
        rng = np.random.default_rng(17)
        for row in random_matrix(rng, 30, 20, min_tokens=20).rows:
            mask = argmax_mask(row)
            assert len(mask) <= 1
            for term, weight in mask:
                assert row[term] == weight
                assert weight == row.weights.max()


class TestWeightedSum:
    def test_interpolation(self):
        result = weighted_sum([vec({A: 1.0}), vec({A: 1.0, B: 2.0})], [0.25, 0.75])
        assert result.to_dict() == pytest.approx({A: 1.0, B: 1.5})

    def test_zero_coefficients_are_skipped(self):
        assert weighted_sum([vec({A: 1.0})], [0.0]) == SparseVector(dtype=np.float64)

    def test_rejects_negative_coefficient(self):
        with pytest.raises(ValueError):
            weighted_sum([vec({A: 1.0})], [-1.0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            weighted_sum([vec({A: 1.0})], [1.0, 2.0])


def test_token_matrix_to_csr(example_query):
    csr = example_query.to_csr(vocab_size=5)
    assert csr.shape == (2, 5)
    np.testing.assert_array_equal(csr.toarray(), dense(example_query, 5).astype(np.float32))
    assert TokenMatrix().to_csr(vocab_size=5).shape == (0, 5)
