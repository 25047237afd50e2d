import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softshift.errors import DimensionMismatch, InvalidTemperature
from softshift.mathcore import (SeededRng, log_softmax_tempered, matmul, softmax_tempered,
                                standard_normal)

logit_vectors = arrays(np.float64, st.integers(2, 12),
                       elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False))
temperatures = st.sampled_from([0.5, 1.0, 2.0, 5.0])


def naive_matmul(a, b):
    out = np.zeros((len(a), len(b[0])))
    for i in range(len(a)):
        for j in range(len(b[0])):
            for k in range(len(b)):
                out[i, j] += a[i][k] * b[k][j]
    return out


def test_matmul_identity():
    assert np.array_equal(matmul(np.eye(2), [[3, 4], [5, 6]]), [[3, 4], [5, 6]])


def test_matmul_row_times_column():
    assert matmul([[1, 2]], [[3], [4]]).tolist() == [[11.0]]


def test_matmul_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_tempered([0.0, 0.0, 0.0], 1.0), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax_tempered([math.log(2), 0.0], 1.0), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(softmax_tempered([2.0, 0.0], 2.0), softmax_tempered([1.0, 0.0], 1.0),
                               atol=1e-15)


@pytest.mark.parametrize("T", [0.0, -1.0, math.inf, math.nan])
def test_softmax_rejects_bad_temperature(T):
    with pytest.raises(InvalidTemperature):
        softmax_tempered([1.0, 2.0], T)


def test_softmax_survives_huge_logits():
    p = softmax_tempered([1000.0, 0.0, -1000.0])
    assert np.all(np.isfinite(p))
    assert p[0] == 1.0


def test_log_softmax_matches_log_of_softmax():
    z = np.random.default_rng(0).normal(size=(4, 6)) * 3
    np.testing.assert_allclose(log_softmax_tempered(z, 2.0), np.log(softmax_tempered(z, 2.0)), atol=1e-13)


@settings(max_examples=200, deadline=None)
@given(logit_vectors, temperatures)
def test_softmax_sums_to_one(z, T):
    p = softmax_tempered(z, T)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0) and np.all(p <= 1)


@settings(max_examples=200, deadline=None)
@given(logit_vectors, temperatures)
def test_softmax_temperature_is_logit_scaling(z, T):
    np.testing.assert_allclose(softmax_tempered(z, T), softmax_tempered(z / T, 1.0), rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(logit_vectors, st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(softmax_tempered(z + c), softmax_tempered(z), rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(logit_vectors)
def test_higher_temperature_is_softer(z):
    if np.ptp(z) == 0:
        return
    peaks = [softmax_tempered(z, T).max() for T in (0.5, 1.0, 2.0, 5.0, 20.0)]
    assert all(a >= b - 1e-15 for a, b in zip(peaks, peaks[1:]))


def test_standard_normal_empty():
    assert standard_normal(SeededRng(1), 0).shape == (0,)


def test_standard_normal_is_a_stream():
    a = SeededRng(42)
    first = np.concatenate([standard_normal(a, 5), standard_normal(a, 5)])
    assert np.array_equal(first, standard_normal(SeededRng(42), 10))


def test_standard_normal_moments():
    x = standard_normal(SeededRng(7), 100_000)
    assert abs(x.mean()) < 0.02
    assert abs(x.var() - 1.0) < 0.05


def test_children_are_independent_of_parent_consumption():
    root = SeededRng(5)
    expected = root.child("a", 1).standard_normal(3)
    root.standard_normal(100)
    assert np.array_equal(root.child("a", 1).standard_normal(3), expected)
    assert not np.array_equal(root.child("a", 2).standard_normal(3), expected)


def test_seed_stream_is_pinned():
    # regression guard: a change here silently changes every experiment
    assert SeededRng(0).child("x").standard_normal(3).tolist() == [
        0.08644463607232149, 1.440793760671604, -1.8290596932194099]


def test_seed_range():
    assert SeededRng(2**64 - 1).seed == 2**64 - 1
    with pytest.raises(ValueError):
        SeededRng(-1)
