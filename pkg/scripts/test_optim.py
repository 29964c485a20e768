import numpy as np
import pytest

from scanet.base import Parameter
from scanet.errors import ArgumentError, DimensionError
from scanet.optim import AdamW, OptimizerState, adamw_step


def test_first_step_moves_each_weight_by_lr():
    # Bias-corrected first step is lr * g / (|g| + eps), i.e. about lr * sign(g).
    params = [np.array([1.0, -2.0, 3.0])]
    grads = [np.array([0.5, -4.0, 0.0])]
    state = OptimizerState.zeros_like(params)
    adamw_step(params, grads, state, lr=0.1, eps=1e-8, weight_decay=0.0)
    np.testing.assert_allclose(params[0], [0.9, -1.9, 3.0], atol=1e-6)
    assert state.t == 1


def test_weight_decay_is_decoupled_from_the_gradient():
    params = [np.array([2.0])]
    state = OptimizerState.zeros_like(params)
    adamw_step(params, [np.zeros(1)], state, lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(params[0], [2.0 - 0.1 * 0.5 * 2.0])


def test_two_steps_follow_the_adamw_recurrence():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    w, m, v = 1.0, 0.0, 0.0
    params = [np.array([w])]
    state = OptimizerState.zeros_like(params)
    for t, g in enumerate([0.3, -0.1], start=1):
        adamw_step(params, [np.array([g])], state, lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=0.01)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * 0.01 * w
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    np.testing.assert_allclose(params[0], [w], rtol=1e-12)


def test_float32_steps_track_a_64bit_scalar_recurrence(rng):
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    gradients = rng.standard_normal(100)
    w, m, v = 0.5, 0.0, 0.0
    params = [np.array([w], dtype=np.float32)]
    state = OptimizerState.zeros_like(params)
    for t, g in enumerate(gradients, start=1):
        adamw_step(params, [np.array([g], dtype=np.float32)], state, lr=lr, beta1=b1, beta2=b2, eps=eps,
                   weight_decay=0.0)
        g = float(np.float32(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert params[0].dtype == np.float32
        assert abs(float(params[0][0]) - w) < 1e-6, f"step {t}"
    assert state.t == 100


def test_missing_gradient_counts_as_zero():
    params = [np.array([1.0])]
    state = OptimizerState.zeros_like(params)
    adamw_step(params, [None], state, lr=0.1, weight_decay=0.0)
    np.testing.assert_allclose(params[0], [1.0])


def test_step_validates_inputs():
    params = [np.zeros(2)]
    state = OptimizerState.zeros_like(params)
    with pytest.raises(DimensionError):
        adamw_step(params, [np.zeros(3)], state, lr=0.1)
    with pytest.raises(ArgumentError):
        adamw_step(params, [np.zeros(2)], state, lr=0.1, beta1=1.0)


def test_optimizer_object_updates_parameters_in_place():
    weight = Parameter(np.array([1.0, 1.0], dtype=np.float32))
    optimizer = AdamW([weight], lr=0.1, weight_decay=0.0)
    weight.grad = np.array([1.0, -1.0], dtype=np.float32)
    optimizer.step()
    np.testing.assert_allclose(weight.data, [0.9, 1.1], atol=1e-6)
    assert weight.data.dtype == np.float32
    optimizer.zero_grad()
    assert weight.grad is None
