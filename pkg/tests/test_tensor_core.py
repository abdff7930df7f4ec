import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from stnn_ddi.tensor_core import (
    DenseTensor3,
    DimensionError,
    RankOneFactors,
    basis,
    cp_reconstruct,
    dense_score,
    frontal_slice,
    indicator,
    mode_product_vec,
)


def loop_reconstruct(lam, a, b, c):
    I, J, K = len(a), len(b), len(c)
    out = np.zeros((I, J, K))
    for i in range(I):
        for j in range(J):
            for k in range(K):
                out[i, j, k] = sum(lam[r] * a[i][r] * b[j][r] * c[k][r] for r in range(len(lam)))
    return out


def loop_score(t, e_p, e_q, k):
    total = 0.0
    for i in range(t.shape[0]):
        for j in range(t.shape[1]):
            total += t[i, j, k] * e_p[i] * e_q[j]
    return total


def test_flat_layout_is_k_fastest():
    t = DenseTensor3(np.arange(24.0).reshape(2, 3, 4))
    i, j, k = 1, 2, 3
    assert t.flat()[(i * 3 + j) * 4 + k] == t[i, j, k]
    assert DenseTensor3.from_flat((2, 3, 4), t.flat()).dims == (2, 3, 4)


def test_from_flat_rejects_wrong_length():
    with pytest.raises(DimensionError):
        DenseTensor3.from_flat((2, 2, 2), np.zeros(7))


def test_non_finite_values_rejected():
    vals = np.zeros((2, 2, 2))
    vals[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        DenseTensor3(vals)


def test_size_guard():
    with pytest.raises(DimensionError):
        cp_reconstruct(RankOneFactors(np.ones(1), np.ones((881, 1)), np.ones((881, 1)), np.ones((1318, 1))))


def test_cp_single_outer_product():
    t = cp_reconstruct(RankOneFactors([1.0], [[1.0], [2.0]], [[3.0]], [[4.0], [5.0]]))
    assert t.dims == (2, 1, 2)
    assert t[0, 0, 0] == 12
    assert t[0, 0, 1] == 15
    assert t[1, 0, 0] == 24
    assert t[1, 0, 1] == 30


def test_cp_zero_weights(rng):
    f = RankOneFactors(np.zeros(3), rng.random((4, 3)), rng.random((5, 3)), rng.random((2, 3)))
    assert_array_equal(cp_reconstruct(f).values, 0.0)


def test_cp_matches_triple_loop(rng):
    lam, a, b, c = rng.standard_normal(2), rng.standard_normal((4, 2)), rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
    t = cp_reconstruct(RankOneFactors(lam, a, b, c))
    assert_allclose(t.values, loop_reconstruct(lam, a, b, c), rtol=0, atol=1e-12)


def test_cp_dimension_mismatch():
    with pytest.raises(DimensionError):
        RankOneFactors(np.ones(2), np.ones((3, 2)), np.ones((3, 1)), np.ones((2, 2)))


def test_cp_linear_in_rank_concatenation(rng):
    parts = [
        (rng.standard_normal(R), rng.standard_normal((3, R)), rng.standard_normal((4, R)), rng.standard_normal((2, R)))
        for R in (2, 3)
    ]
    joined = RankOneFactors(*[np.concatenate([p[i] for p in parts], axis=-1) for i in range(4)])
    separate = sum(cp_reconstruct(RankOneFactors(*p)).values for p in parts)
    assert_allclose(cp_reconstruct(joined).values, separate, atol=1e-12)


def test_mode_product_of_ones():
    t = DenseTensor3(np.ones((2, 2, 2)))
    assert_array_equal(mode_product_vec(t, [1.0, 1.0], 3), np.full((2, 2), 2.0))


def test_mode_product_basis_gives_slice(rng):
    t = DenseTensor3(rng.standard_normal((3, 4, 5)))
    for k in range(5):
        assert_array_equal(mode_product_vec(t, basis(5, k), 3), t.values[:, :, k])
        assert_array_equal(frontal_slice(t, k), mode_product_vec(t, basis(5, k), 3))


def test_mode_product_brute_force(rng):
    t = DenseTensor3(rng.standard_normal((3, 4, 2)))
    v = rng.standard_normal(4)
    expected = np.zeros((3, 2))
    for i in range(3):
        for k in range(2):
            expected[i, k] = sum(t[i, j, k] * v[j] for j in range(4))
    out = mode_product_vec(t, v, 2)
    assert out.shape == (3, 2)
    assert_allclose(out, expected, atol=1e-12)


def test_mode_product_order_drops_to_scalar(rng):
    t = DenseTensor3(rng.standard_normal((2, 3, 4)))
    m = mode_product_vec(t, rng.standard_normal(4), 3)
    v = mode_product_vec(m, rng.standard_normal(3), 2)
    s = mode_product_vec(v, rng.standard_normal(2), 1)
    assert m.ndim == 2 and v.ndim == 1 and isinstance(s, float)


def test_mode_product_length_mismatch():
    with pytest.raises(DimensionError):
        mode_product_vec(DenseTensor3(np.ones((2, 2, 3))), np.ones(2), 3)
    with pytest.raises(DimensionError):
        mode_product_vec(DenseTensor3(np.ones((2, 2, 3))), np.ones(2), 4)


def test_frontal_slice_basis_and_zero():
    vals = np.zeros((2, 2, 2))
    vals[0, 1, 1] = 1.0
    t = DenseTensor3(vals)
    assert_array_equal(frontal_slice(t, 1), [[0, 1], [0, 0]])
    assert_array_equal(frontal_slice(t, 0), np.zeros((2, 2)))
    with pytest.raises(IndexError):
        frontal_slice(t, 2)


def test_frontal_slice_of_cp(rng):
    lam, a, b, c = rng.standard_normal(3), rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal((2, 3))
    t = cp_reconstruct(RankOneFactors(lam, a, b, c))
    for k in range(2):
        expected = sum(lam[r] * c[k, r] * np.outer(a[:, r], b[:, r]) for r in range(3))
        assert_allclose(frontal_slice(t, k), expected, atol=1e-12)


def test_dense_score_trivial_cases():
    t = DenseTensor3(np.ones((5, 5, 2)))
    assert dense_score(t, np.zeros(5), indicator([1, 2], 5), 0) == 0.0
    assert dense_score(t, indicator([0, 3], 5), indicator([1, 2, 4], 5), 1) == 6.0
    with pytest.raises(IndexError):
        dense_score(t, np.zeros(5), np.zeros(5), 2)


def test_dense_score_double_loop(rng):
    t = DenseTensor3(rng.standard_normal((6, 6, 3)))
    for _ in range(10):
        e_p = (rng.random(6) < 0.5).astype(float)
        e_q = (rng.random(6) < 0.5).astype(float)
        k = int(rng.integers(3))
        assert dense_score(t, e_p, e_q, k) == pytest.approx(loop_score(t.values, e_p, e_q, k), abs=1e-12)


def test_dense_score_uses_first_axis_for_p():
    vals = np.zeros((2, 2, 1))
    vals[0, 1, 0] = 1.0
    t = DenseTensor3(vals)
    assert dense_score(t, basis(2, 0), basis(2, 1), 0) == 1.0
    assert dense_score(t, basis(2, 1), basis(2, 0), 0) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_dense_score_bilinear(seed):
    rng = np.random.default_rng(seed)
    t = DenseTensor3(rng.standard_normal((5, 5, 2)))
    u, w, e_q = rng.standard_normal(5), rng.standard_normal(5), rng.standard_normal(5)
    lhs = dense_score(t, u + w, e_q, 1)
    rhs = dense_score(t, u, e_q, 1) + dense_score(t, w, e_q, 1)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
