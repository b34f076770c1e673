import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpsketch.numerics import (DimensionError, Exponent, as_matrix, child_seed, dual_exponent,
                               format_matrix, make_rng, mat_apply, parse_matrix,
                               sample_gaussian_matrix, sample_pstable, transpose, vector_norm)

finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
exponents = st.one_of(st.just(1.0), st.just(math.inf), st.floats(1.0, 1e6))


def test_dual_examples():
    assert dual_exponent(1).is_inf
    assert dual_exponent(math.inf).value == 1.0
    assert dual_exponent(2).value == 2.0
    assert dual_exponent(4 / 3).value == pytest.approx(4.0, rel=1e-14)
    assert Exponent.parse("inf").dual().value == 1.0


def test_exponent_rejects_below_one():
    with pytest.raises(ValueError):
        Exponent(0.5)
    with pytest.raises(ValueError):
        Exponent(float("nan"))


@given(exponents)
def test_dual_involution(p):
    back = dual_exponent(dual_exponent(p)).value
    if math.isinf(p):
        assert math.isinf(back)
    else:
        assert back == pytest.approx(p, rel=1e-9)


def test_norm_examples():
    assert vector_norm([3, 4], 2) == 5.0
    assert vector_norm([1, -1, 1], math.inf) == 1.0
    assert vector_norm([1, 1, 1, 1], 4 / 3) == pytest.approx(4 ** 0.75, rel=1e-12)
    assert vector_norm([0, 0], 3) == 0.0


def test_large_exponent_does_not_overflow():
    x = np.array([1e200, 3e199, -2e200])
    v = vector_norm(x, 50)
    assert np.isfinite(v)
    assert 2e200 <= v <= 2e200 * 3 ** (1 / 50) * (1 + 1e-12)


def test_batch_norms_match_loop():
    a = make_rng(3).standard_normal((5, 7))
    for p in (1, 1.5, 2, 3, 12, math.inf):
        cols = vector_norm(a, p, axis=0)
        for j in range(7):
            assert cols[j] == pytest.approx(vector_norm(a[:, j], p), rel=1e-12)


@given(st.lists(finite_floats, min_size=1, max_size=20), exponents, exponents)
def test_norm_monotone_in_p(xs, p, q):
    lo, hi = sorted((p, q))
    assert vector_norm(xs, lo) >= vector_norm(xs, hi) * (1 - 1e-12)


@given(st.lists(finite_floats, min_size=1, max_size=20), exponents,
       st.floats(-1e3, 1e3, allow_nan=False))
def test_norm_homogeneous(xs, p, c):
    x = np.array(xs)
    assert vector_norm(c * x, p) == pytest.approx(abs(c) * vector_norm(x, p), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, math.inf])
def test_triangle_inequality(p):
    rng = make_rng(11)
    for _ in range(200):
        x, y = rng.standard_normal((2, 9)) * rng.exponential(size=(2, 1))
        assert vector_norm(x + y, p) <= vector_norm(x, p) + vector_norm(y, p) + 1e-12


def test_mat_apply_against_direct_summation():
    rng = make_rng(5)
    a = rng.standard_normal((3, 2))
    x = rng.standard_normal(2)
    brute = [sum(a[i, j] * x[j] for j in range(2)) for i in range(3)]
    np.testing.assert_allclose(mat_apply(a, x), brute, rtol=1e-14)
    np.testing.assert_array_equal(mat_apply(np.eye(4), np.arange(4.0)), np.arange(4.0))
    np.testing.assert_array_equal(transpose(transpose(a)), a)
    with pytest.raises(DimensionError):
        mat_apply(a, np.ones(3))


def test_validation_rejects_non_finite():
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        as_matrix([[np.inf]])


def test_gaussian_matrix_moments_and_determinism():
    a = sample_gaussian_matrix(make_rng(1), 1000, 1000, 1.0)
    assert abs(a.mean()) < 0.01
    assert abs(a.var() - 1.0) < 0.05
    b = sample_gaussian_matrix(make_rng(1), 1000, 1000, 1.0)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        sample_gaussian_matrix(make_rng(1), 2, 2, 0.0)


def test_pstable_conventions():
    g = sample_pstable(make_rng(2), 2, 100_000)
    assert np.var(g) == pytest.approx(2.0, rel=0.05)
    c = sample_pstable(make_rng(3), 1, 100_000)
    assert np.median(np.abs(c)) == pytest.approx(1.0, rel=0.05)
    assert sample_pstable(make_rng(4), 1.5, 0).shape == (0,)
    with pytest.raises(ValueError):
        sample_pstable(make_rng(4), 2.5, 10)


def test_child_seeds_are_distinct_and_stable():
    seeds = {child_seed(7, lane) for lane in range(100)}
    assert len(seeds) == 100
    assert child_seed(7, 3) == child_seed(7, 3)


@settings(max_examples=25)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32))
def test_matrix_text_round_trip(n, d, seed):
    a = make_rng(seed).standard_normal((n, d))
    np.testing.assert_array_equal(parse_matrix(format_matrix(a)), a)


def test_matrix_reader_rejects_bad_input():
    with pytest.raises(ValueError):
        parse_matrix("2 2\n1 2\n3 nan\n")
    with pytest.raises(ValueError):
        parse_matrix("2 2\n1 2\n")
