import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxrepair.coremath import WeightedPNorm, as_vector, pnorm, positive_part, weighted_pnorm
from cvxrepair.errors import InvalidInputError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = st.lists(finite, min_size=1, max_size=6)
powers = st.floats(1.0, 6.0)


@pytest.mark.parametrize("v, p, expected", [
    ((3, 4), 2, 5.0),
    ((1, 1), 2, math.sqrt(2)),
    ((1, -2, 2), 1, 5.0),
])
def test_pnorm_examples(v, p, expected):
    assert pnorm(v, p) == pytest.approx(expected, rel=1e-15)


def test_pnorm_large_entries_do_not_overflow():
    assert pnorm([1e200, 1e200], 3) == pytest.approx(1e200 * 2 ** (1 / 3))


@pytest.mark.parametrize("bad", [[1.0, np.nan], [np.inf, 0.0]])
def test_pnorm_rejects_nonfinite(bad):
    with pytest.raises(InvalidInputError):
        pnorm(bad, 2)


@pytest.mark.parametrize("p", [0.5, float("inf"), -1])
def test_pnorm_rejects_bad_power(p):
    with pytest.raises(InvalidInputError):
        pnorm([1, 2], p)


def test_weighted_pnorm_examples():
    half = WeightedPNorm((0.5, 0.5), 2)
    assert weighted_pnorm([(1, 0), (-1, 0)], half) == pytest.approx(1.0)
    assert weighted_pnorm([(0, 0), (0, 0)], WeightedPNorm((0.3, 0.7), 3)) == 0.0
    w = WeightedPNorm((0.8, 0.2), 2)
    assert weighted_pnorm([(2, 0), (0, 0)], w) == pytest.approx(math.sqrt(0.8 * 4), rel=1e-14)


def test_weighted_pnorm_mismatch():
    w = WeightedPNorm((1, 1), 2)
    with pytest.raises(InvalidInputError):
        weighted_pnorm([(1, 0)], w)
    with pytest.raises(InvalidInputError):
        weighted_pnorm([(1, 0), (1, 0, 0)], w)


def test_weights_normalized_and_validated():
    w = WeightedPNorm((2, 6), 3)
    assert w.weights == (0.25, 0.75)
    assert w.m == 2 and w.power == 3.0
    assert WeightedPNorm.uniform(4).weights == (0.25,) * 4
    with pytest.raises(InvalidInputError):
        WeightedPNorm((1, 0), 2)
    with pytest.raises(InvalidInputError):
        WeightedPNorm((1, 1), 0.5)
    with pytest.raises(InvalidInputError):
        WeightedPNorm((), 2)


@pytest.mark.parametrize("v, expected", [
    ((1, -2, 0), (1, 0, 0)),
    ((-5, -1), (0, 0)),
    ((3, 4), (3, 4)),
])
def test_positive_part_examples(v, expected):
    np.testing.assert_array_equal(positive_part(v), expected)


def test_as_vector_shapes():
    assert as_vector(3.0).shape == (1,)
    with pytest.raises(InvalidInputError):
        as_vector([[1, 2]])
    with pytest.raises(InvalidInputError):
        as_vector([1, 2], dim=3)


@settings(max_examples=200, deadline=None)
@given(vectors, powers, st.floats(-1e3, 1e3))
def test_pnorm_homogeneous(v, p, c):
    lhs = pnorm(np.multiply(c, v), p)
    rhs = abs(c) * pnorm(v, p)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(*[st.lists(finite, min_size=n, max_size=n)] * 2)),
       powers)
def test_pnorm_triangle(pair, p):
    x, y = pair
    assert pnorm(np.add(x, y), p) <= pnorm(x, p) + pnorm(y, p) + 1e-12 * (1 + pnorm(x, p) + pnorm(y, p))


def test_uniform_weighted_two_norm_is_rms():
    rng = np.random.default_rng(0)
    for m in range(1, 6):
        u = rng.standard_normal((m, 3))
        got = weighted_pnorm(list(u), WeightedPNorm.uniform(m, 2))
        want = math.sqrt(np.sum(u * u) / m)
        assert got == pytest.approx(want, rel=1e-12)


def test_weighted_pnorm_is_frozen():
    w = WeightedPNorm((1, 1), 2)
    with pytest.raises(Exception):
        w.power = 3
