import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hivekv.numeric import child_seeds, matvec, seeded_gaussian_matrix, softmax
from oracles import naive_matvec, naive_softmax

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


def test_matvec_identity_and_zero():
    assert matvec(np.eye(3), [1, 2, 3]).tolist() == [1, 2, 3]
    assert matvec(np.zeros((2, 2)), [5, 7]).tolist() == [0, 0]


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(np.eye(3), [1, 2])


def test_matvec_rejects_non_finite():
    with pytest.raises(ValueError):
        matvec(np.eye(2), [1, np.nan])


def test_matvec_matches_naive_on_100_seeded_cases():
    for seed in range(100):
        m = seeded_gaussian_matrix(seed, 4, 4)
        v = seeded_gaussian_matrix(seed + 1000, 4, 1)[:, 0]
        got = matvec(m, v)
        want = np.array(naive_matvec(m.tolist(), v.tolist()))
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)


def test_softmax_trivial_cases():
    assert softmax([3.7], 11.0).tolist() == [1.0]
    assert softmax([2.0, 2.0], 0.3).tolist() == [0.5, 0.5]


def test_softmax_matches_direct_formula():
    np.testing.assert_allclose(softmax([1, 2, 3], 1.0), naive_softmax([1, 2, 3]), rtol=0, atol=1e-12)


def test_softmax_empty_raises():
    with pytest.raises(ValueError):
        softmax([], 1.0)


def test_softmax_survives_large_logits():
    p = softmax([1000.0, 999.0], 1.0)
    assert math.isclose(p.sum(), 1.0)
    assert p[0] > p[1]


@given(st.lists(finite, min_size=1, max_size=40), st.floats(min_value=1e-3, max_value=10))
def test_softmax_is_distribution_and_keeps_argmax(xs, c):
    p = softmax(xs, c)
    assert abs(p.sum() - 1) < 1e-9
    assert np.all(p <= 1)
    assert np.all(p >= 0)
    top = sorted(xs)[-2:]
    assume(len(xs) == 1 or top[1] - top[0] > 1e-6)
    assert xs[int(np.argmax(p))] == max(xs)


def test_softmax_entries_positive_for_moderate_range():
    p = softmax(np.linspace(-5, 5, 30), 2.0)
    assert np.all(p > 0)


def test_seeded_matrix_determinism():
    a = seeded_gaussian_matrix(7, 5, 3, 0.5)
    b = seeded_gaussian_matrix(7, 5, 3, 0.5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, seeded_gaussian_matrix(8, 5, 3, 0.5))


def test_seeded_matrix_sample_mean():
    x = seeded_gaussian_matrix(2024, 1000, 1, 1.0)
    assert abs(x.mean()) < 0.1


@pytest.mark.parametrize("rows,cols,std", [(0, 1, 1.0), (1, 0, 1.0), (2, 2, 0.0)])
def test_seeded_matrix_preconditions(rows, cols, std):
    with pytest.raises(ValueError):
        seeded_gaussian_matrix(0, rows, cols, std)


def test_child_seeds_stable_and_distinct():
    assert child_seeds(5, 3) == child_seeds(5, 3)
    assert len(set(child_seeds(5, 3))) == 3
