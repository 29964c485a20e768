"""
Graph recording and reverse-mode gradient accumulation.
"""

import numpy as np
import pytest

from scanet import ops
from scanet.base import Parameter, Tensor, backward
from scanet.errors import ContractError, DimensionError
from scanet.settings import no_grad, precision


def test_leaf_gradients_of_a_small_expression():
    with precision(np.float64):
        a = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        b = Tensor(np.array([4.0, 5.0, 6.0]), requires_grad=True)
        loss = ((a * b) + a).sum()
        loss.backward()
    np.testing.assert_allclose(a.grad, [5.0, 6.0, 7.0])
    np.testing.assert_allclose(b.grad, [1.0, 2.0, 3.0])


def test_diamond_graph_sums_both_paths():
    with precision(np.float64):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * 3.0
        loss = (y * y + y).sum()
        loss.backward()
    # d/dx (9x^2 + 3x) = 18x + 3
    np.testing.assert_allclose(x.grad, [39.0])


def test_gradients_accumulate_until_zero_grad():
    w = Parameter(np.ones(3))
    for _ in range(2):
        ops.sum(ops.scale(w, 2.0)).backward()
    np.testing.assert_allclose(w.grad, [4.0, 4.0, 4.0])
    w.zero_grad()
    assert w.grad is None


def test_intermediates_only_keep_grad_when_retained():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    hidden = ops.relu(x)
    kept = ops.scale(x, 2.0).retain_grad()
    ops.sum(ops.add(hidden, kept)).backward()
    assert hidden.grad is None
    np.testing.assert_allclose(kept.grad, np.ones((2, 2)))
    np.testing.assert_allclose(x.grad, np.full((2, 2), 3.0))


def test_broadcast_gradient_is_summed_back():
    x = Tensor(np.ones((4, 3)), requires_grad=True)
    bias = Tensor(np.zeros(3), requires_grad=True)
    ops.sum(ops.add(x, bias)).backward()
    np.testing.assert_allclose(bias.grad, [4.0, 4.0, 4.0])


def test_backward_requires_scalar_or_matching_seed():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.scale(x, 2.0)
    with pytest.raises(ContractError, match="scalar"):
        y.backward()
    with pytest.raises(DimensionError):
        backward(y, np.ones(4))
    backward(y, np.array([1.0, 0.0, 2.0]))
    np.testing.assert_allclose(x.grad, [2.0, 0.0, 4.0])


def test_backward_on_constant_raises():
    with pytest.raises(ContractError):
        Tensor(np.ones(1)).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = ops.scale(x, 3.0)
    assert not y.requires_grad and y.is_leaf


def test_deep_chain_does_not_hit_recursion_limit():
    x = Tensor(np.ones(1), requires_grad=True)
    y = x
    for _ in range(5000):
        y = ops.scale(y, 1.0)
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0])


def test_nodes_carry_unique_ids_and_graph_prints(capsys):
    x = Tensor(np.ones((2, 2)), requires_grad=True, name="x")
    y = ops.relu(ops.scale(x, 2.0))
    z = ops.relu(ops.scale(x, 2.0))
    assert y.node.unique_id != z.node.unique_id
    ops.sum(ops.add(y, z)).inspect_graph()
    out = capsys.readouterr().out
    assert "sum" in out and "relu" in out and "(seen)" in out


def test_item_rejects_non_scalars():
    with pytest.raises(ContractError):
        Tensor(np.ones(2)).item()
