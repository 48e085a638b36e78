import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from nnlrp.tensor import ShapeError, as_tensor, elementwise, reduce_sum


def test_add():
    np.testing.assert_array_equal(elementwise("add", [1, 2], [3, 4]), [4, 6])


def test_mul():
    np.testing.assert_array_equal(elementwise("mul", [2, -1], [3, 3]), [6, -3])


def test_div_zero_denominator_takes_positive_eps():
    np.testing.assert_allclose(elementwise("div", [1.0], [0.0], eps=0.01), [100.0], rtol=1e-15)


def test_div_sign_matched():
    out = elementwise("div", [1.0, 1.0], [-0.5, 0.5], eps=0.5)
    np.testing.assert_array_equal(out, [-1.0, 1.0])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        elementwise("add", np.zeros(2), np.zeros(3))
    assert "(2,)" in str(exc.value) and "(3,)" in str(exc.value)


def test_unknown_op():
    with pytest.raises(ValueError):
        elementwise("pow", [1.0], [1.0])


@pytest.mark.parametrize("axes, expected", [({0, 1}, 10.0), ({0}, [4.0, 6.0]), ({1}, [3.0, 7.0])])
def test_reduce_sum(axes, expected):
    np.testing.assert_array_equal(reduce_sum([[1, 2], [3, 4]], axes), expected)


def test_reduce_sum_zeros():
    assert reduce_sum(np.zeros((3, 3)), {0, 1}) == 0


def test_reduce_sum_bad_axis():
    with pytest.raises(ShapeError):
        reduce_sum(np.zeros((2, 2)), {2})


def test_as_tensor_shape_checks():
    t = as_tensor(range(6), (2, 3))
    assert t.dtype == np.float64 and t.shape == (2, 3) and t[1, 0] == 3
    with pytest.raises(ShapeError):
        as_tensor(range(5), (2, 3))


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=4, max_side=5), elements=finite))
def test_full_reduction_matches_exact_sum(a):
    exact = math.fsum(a.ravel())
    total = reduce_sum(a)
    assert abs(total - exact) <= 1e-12 * max(1.0, math.fsum(np.abs(a).ravel()))


@settings(max_examples=50)
@given(arrays(np.float64, 8, elements=finite), arrays(np.float64, 8, elements=finite),
       st.floats(1e-6, 1.0))
def test_div_is_finite(a, b, eps):
    assert np.all(np.isfinite(elementwise("div", a, b, eps=eps)))
