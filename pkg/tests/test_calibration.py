"""Activation statistics: single-pass, merge, and SYMA round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symprune.calibration import (
    ActivationStats,
    FormatError,
    compute_stats,
    load_stats,
    merge_stats,
    store_stats,
)

token_matrices = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.integers(1, 5)),
    elements=st.floats(min_value=-20, max_value=20, allow_nan=False, allow_infinity=False),
)


def test_compute_stats_small():
    s = compute_stats(np.array([[1.0, 0.0], [0.0, 2.0]]))
    np.testing.assert_allclose(s.col_l2, [1.0, 2.0])
    np.testing.assert_allclose(s.mean, [0.5, 1.0])
    np.testing.assert_allclose(s.variance, [0.25, 1.0])
    assert s.token_count == 2


def test_compute_stats_single_token():
    s = compute_stats(np.array([[3.0, -4.0]]))
    np.testing.assert_allclose(s.col_l2, [3.0, 4.0])
    np.testing.assert_allclose(s.mean, [3.0, -4.0])
    np.testing.assert_array_equal(s.variance, [0.0, 0.0])


def test_compute_stats_zero_matrix():
    s = compute_stats(np.zeros((5, 3)))
    assert s.token_count == 5
    assert not s.col_l2.any() and not s.mean.any() and not s.variance.any()


def test_compute_stats_empty_matrix():
    s = compute_stats(np.zeros((0, 4)))
    assert s.token_count == 0
    assert s.feature_count == 4


def test_merge_with_empty_is_identity():
    s = compute_stats(np.array([[1.0, 2.0], [3.0, 4.0]]))
    merged = merge_stats(s, ActivationStats.empty(2))
    assert merged is s
    assert merge_stats(ActivationStats.empty(2), s) is s


def test_merge_matches_single_pass():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 6))
    top, bottom = compute_stats(x[:17]), compute_stats(x[17:])
    merged = merge_stats(top, bottom)
    whole = compute_stats(x)
    np.testing.assert_allclose(merged.col_l2, whole.col_l2, rtol=1e-10)
    np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(merged.variance, whole.variance, rtol=1e-10, atol=1e-12)
    assert merged.token_count == whole.token_count


def test_merge_two_single_tokens():
    s = merge_stats(compute_stats(np.array([[1.0]])), compute_stats(np.array([[3.0]])))
    np.testing.assert_allclose(s.mean, [2.0])
    np.testing.assert_allclose(s.variance, [1.0])
    np.testing.assert_allclose(s.col_l2, [np.sqrt(10.0)])


def test_merge_rejects_feature_mismatch():
    with pytest.raises(ValueError):
        merge_stats(ActivationStats.empty(2), ActivationStats.empty(3))


@settings(max_examples=40, deadline=None)
@given(token_matrices, st.integers(0, 100))
def test_merge_commutative_and_associative(x, salt):
    rows = x.shape[0]
    a, b, c = (
        compute_stats(x[: rows // 3]),
        compute_stats(x[rows // 3 : 2 * rows // 3]),
        compute_stats(x[2 * rows // 3 :]),
    )
    ab_c = merge_stats(merge_stats(a, b), c)
    a_bc = merge_stats(a, merge_stats(b, c))
    ba_c = merge_stats(merge_stats(b, a), c)
    for lhs, rhs in ((ab_c, a_bc), (ab_c, ba_c)):
        np.testing.assert_allclose(lhs.col_l2, rhs.col_l2, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(lhs.mean, rhs.mean, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(lhs.variance, rhs.variance, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    token_matrices,
    st.floats(min_value=-5, max_value=5, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
)
def test_stats_scaling(x, c):
    base = compute_stats(x)
    scaled = compute_stats(c * x)
    np.testing.assert_allclose(scaled.col_l2, abs(c) * base.col_l2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(scaled.mean, c * base.mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(scaled.variance, c * c * base.variance, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(token_matrices)
def test_norm_dominates_mean(x):
    s = compute_stats(x)
    assert (s.col_l2**2 >= s.token_count * s.mean**2 - 1e-9).all()


def test_syma_round_trip():
    s = compute_stats(np.array([[1.0, -2.0], [3.0, 0.5], [0.25, 4.0]]))
    got = load_stats(store_stats(s))
    assert got.feature_count == s.feature_count
    assert got.token_count == s.token_count
    for name in ("col_l2", "mean", "variance"):
        np.testing.assert_array_equal(
            getattr(got, name),
            np.asarray(getattr(s, name), dtype=np.float32).astype(np.float64),
        )


def test_syma_rejects_bad_magic():
    blob = store_stats(ActivationStats.empty(2))
    with pytest.raises(FormatError):
        load_stats(b"XXXX12" + blob[6:])


def test_syma_rejects_truncation():
    blob = store_stats(compute_stats(np.ones((2, 3))))
    with pytest.raises(FormatError):
        load_stats(blob[:-1])


def test_syma_zero_features_valid():
    got = load_stats(store_stats(ActivationStats.empty(0)))
    assert got.feature_count == 0
    assert got.token_count == 0


def test_zero_token_stats_must_be_zero():
    with pytest.raises(ValueError):
        ActivationStats(1, 0, np.array([1.0]), np.array([0.0]), np.array([0.0]))
