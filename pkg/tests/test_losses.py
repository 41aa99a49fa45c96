import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lindlearn import losses
from lindlearn.trainer import loss

vals = arrays(np.float64, 6, elements=st.floats(-5, 5, allow_nan=False))


def test_examples():
    assert loss([1.0, 2.0], [1.0, 2.0], "MSE") == 0
    assert loss([2.0], [1.0], "MSE") == 1 and loss([2.0], [1.0], "MAE") == 1
    assert np.isclose(loss([0.1, -0.3], [0, 0], "MSE"), 0.05)
    assert np.isclose(loss([0.1, -0.3], [0, 0], "MAE"), 0.2)


def test_errors():
    with pytest.raises(ValueError):
        loss([1, 2], [1], "MSE")
    with pytest.raises(ValueError):
        loss([1], [1], "huber")


def test_custom_normalization():
    assert losses.loss([1.0, 1.0], [0.0, 0.0], "MSE", n=1) == 2.0


@given(vals, vals)
def test_derivative_matches_fd_mse(p, r):
    d = losses.loss_derivative(p, r, "MSE")
    np.testing.assert_allclose(d, 2 * (p - r) / len(p))


def test_mae_deadband():
    d = losses.loss_derivative([1.0, 1.0 + 1e-13, 2.0], [1.0, 1.0, 1.0], "MAE")
    np.testing.assert_array_equal(d, [0.0, 0.0, 1 / 3])


@given(vals, vals)
def test_losses_nonnegative(p, r):
    assert loss(p, r, "MSE") >= 0 and loss(p, r, "MAE") >= 0
