import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgq.numerics import NonFiniteError, as_matrix, finite_diff_grad, logsumexp, make_rng


def test_finite_diff_square():
    g = finite_diff_grad(lambda x: x[0] ** 2, [3.0], h=1e-5)
    assert abs(g[0] - 6.0) < 1e-9


def test_finite_diff_constant_is_zero():
    g = finite_diff_grad(lambda x: 7.5, np.arange(4.0))
    assert np.array_equal(g, np.zeros(4))


def test_finite_diff_reports_bad_coordinate():
    def f(x):
        return np.inf if x[2] > 1.0 else x.sum()
    with pytest.raises(NonFiniteError) as err:
        finite_diff_grad(f, [0.0, 0.0, 1.0], h=1e-3)
    assert err.value.index == 2


def test_finite_diff_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda x: 0.0, [1.0], h=0.0)


def test_logsumexp_values():
    assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert abs(logsumexp([-1000.0, 0.0])) < 1e-12
    assert logsumexp([1.0, 2.0, 3.0]) == pytest.approx(3 + math.log(1 + math.exp(-1) + math.exp(-2)), abs=1e-14)
    assert logsumexp([-745.5]) == -745.5


def test_logsumexp_empty():
    with pytest.raises(ValueError):
        logsumexp([])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-100, 100))
def test_logsumexp_shift(v, c):
    v = np.array(v)
    assert logsumexp(v + c) == pytest.approx(logsumexp(v) + c, abs=1e-12)


def test_logsumexp_axis():
    m = np.array([[0.0, 0.0], [1.0, 2.0]])
    out = logsumexp(m, axis=1)
    assert out.shape == (2,)
    assert out[0] == pytest.approx(math.log(2))


def test_rng_streams_reproducible():
    a = make_rng(42, "data").standard_normal((5, 3))
    b = make_rng(42, "data").standard_normal((5, 3))
    c = make_rng(42, "init").standard_normal((5, 3))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_rng_rejects_negative_seed():
    with pytest.raises(ValueError):
        make_rng(-1)


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        as_matrix([[1.0, np.nan]])
    assert np.isnan(as_matrix([[1.0, np.nan]], allow_nonfinite=True)).any()
