import numpy as np
import pytest
from hypothesis import given, strategies as st

from specmarkov.optim import SGD, Adam, make_optimizer


def reference_adam(x, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return x


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.floats(1e-4, 1.0))
def test_adam_matches_scalar_reference(grads, lr):
    params = {"x": np.array([0.3])}
    opt = Adam(lr)
    for g in grads:
        opt.step(params, {"x": np.array([g])})
    assert params["x"][0] == pytest.approx(reference_adam(0.3, grads, lr), rel=1e-12, abs=1e-12)


def test_adam_first_step_is_lr_sized():
    params = {"w": np.array([1.0, -2.0])}
    Adam(0.1).step(params, {"w": np.array([3.0, -0.5])})
    assert np.allclose(params["w"], [0.9, -1.9], atol=1e-8)


def test_sgd_and_factory():
    params = {"w": np.array([1.0])}
    SGD(0.5).step(params, {"w": np.array([2.0])})
    assert params["w"][0] == 0.0
    assert isinstance(make_optimizer("adam", 0.1), Adam)
    with pytest.raises(ValueError):
        make_optimizer("lbfgs", 0.1)


def test_adam_minimises_quadratic():
    params = {"x": np.array([5.0, -3.0])}
    opt = Adam(0.1)
    for _ in range(500):
        opt.step(params, {"x": 2 * (params["x"] - np.array([1.0, 2.0]))})
    assert np.allclose(params["x"], [1.0, 2.0], atol=1e-3)
