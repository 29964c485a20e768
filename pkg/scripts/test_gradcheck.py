"""
Finite-difference verification of every backward pass, and its negative control.
"""

import numpy as np
import pytest

from scanet import ops
from scanet.base import Tensor
from scanet.errors import ArgumentError, ContractError
from scanet.gradcheck import (
    covered_ops, format_gradcheck_table, grad_check, grad_check_stats, inject_fault, run_gradcheck_suite,
)
from scanet.settings import Settings
from scanet.simple_registry import OP_REGISTRY


def test_every_registered_op_has_a_case():
    coverage = covered_ops()
    assert set(coverage) == set(OP_REGISTRY)
    assert all(coverage.values()), [name for name, covered in coverage.items() if not covered]


def test_suite_passes_for_all_ops_and_the_tiny_model():
    results = run_gradcheck_suite(tolerance=1e-3)
    failed = [(r.name, r.max_relative_error) for r in results if not r.passed]
    assert not failed
    assert {"tiny_model", "attention", "conv2d"} <= {r.name for r in results}
    table = format_gradcheck_table(results)
    assert table.count("pass") == len(results)


def test_injected_conv_fault_is_detected():
    with inject_fault("conv2d"):
        results = {r.name: r for r in run_gradcheck_suite(names=["conv2d", "matmul"])}
    assert not results["conv2d"].passed
    assert results["conv2d"].max_relative_error > 0.1
    assert results["matmul"].passed
    after = run_gradcheck_suite(names=["conv2d"])[0]
    assert after.passed


def test_grad_check_restores_inputs_and_precision():
    data = np.arange(6, dtype=np.float32).reshape(2, 3)
    x = Tensor(data.copy())
    error = grad_check(lambda t: ops.sum(ops.mul(t, t)), [x], eps=1e-4)
    assert error < 1e-6
    assert x.data.dtype == np.float32 and not x.requires_grad and x.grad is None
    np.testing.assert_array_equal(x.data, data)
    assert Settings.dtype == np.float32


# The loose bound is float32 finite-difference noise; strict bounds are checked in float64.
def test_float32_check_with_default_eps_on_a_smooth_op():
    x = Tensor(np.array([0.5, 1.0, 1.5, 2.0]))
    error = grad_check(lambda t: ops.sum(ops.mul(t, t)), [x], eps=1e-3, dtype=np.float32)
    assert error < 1e-2


def test_sampling_bounds_the_number_of_checked_elements():
    x = Tensor(np.ones((10, 10)))
    stats = grad_check_stats(lambda t: ops.sum(ops.scale(t, 2.0)), [x], eps=1e-4, max_elements_per_tensor=7)
    assert stats.checked == 7 and stats.skipped == 0


def test_kinks_are_skipped_not_failed():
    x = Tensor(np.array([0.0, 1.0, -1.0]))
    stats = grad_check_stats(lambda t: ops.sum(ops.relu(t)), [x], eps=1e-3, skip_kinks=True)
    assert stats.skipped == 1 and stats.checked == 2
    assert stats.max_relative_error < 1e-8


def test_argument_errors():
    x = Tensor(np.ones(2))
    with pytest.raises(ArgumentError):
        grad_check(lambda t: ops.sum(t), [x], eps=0.0)
    with pytest.raises(ContractError):
        grad_check(lambda t: ops.scale(t, 1.0), [x])
    with pytest.raises(ArgumentError):
        with inject_fault("no_such_op"):
            pass
    with pytest.raises(ArgumentError):
        run_gradcheck_suite(names=["no_such_case"])
