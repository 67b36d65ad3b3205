"""Backward-pass contracts: trivial gradients, FD agreement, tape behavior."""

import numpy as np
import pytest

from segforge import Tensor, backward, no_grad, ops
from segforge.errors import GraphError, ShapeError
from segforge.gradcheck import OP_CHECKS, check_tiny_model, run_all
from segforge.tensor import default_dtype, reset_tape


def test_sum_gradient_is_ones():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 3)).astype(np.float32),
               requires_grad=True)
    backward(ops.tensor_sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((3, 3), dtype=np.float32))


def test_relu_all_negative_gives_zero_grad():
    x = Tensor(-np.abs(np.random.default_rng(1).standard_normal((4, 4))) - 0.1,
               requires_grad=True, dtype=np.float32)
    backward(ops.tensor_sum(ops.relu(x)))
    np.testing.assert_array_equal(x.grad, np.zeros((4, 4), dtype=np.float32))


def test_grad_accumulates_across_backwards():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    backward(ops.tensor_sum(x))
    backward(ops.tensor_sum(x))
    np.testing.assert_array_equal(x.grad, np.full((2, 2), 2.0, dtype=np.float32))


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(ops.relu(x))


def test_backward_twice_through_released_activations():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    loss = ops.tensor_sum(ops.relu(x))
    backward(loss)
    with pytest.raises(GraphError):
        backward(loss)


def test_no_grad_skips_recording():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    with no_grad():
        out = ops.relu(x)
    assert out.node is None


def test_reset_tape_clears_nodes():
    from segforge.tensor import TAPE

    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    ops.relu(x)
    assert TAPE.nodes
    reset_tape()
    assert not TAPE.nodes


@pytest.mark.parametrize("op_name", sorted(OP_CHECKS))
def test_finite_difference_per_op(op_name):
    """Every differentiable op agrees with central differences in 64-bit."""
    with default_dtype(np.float64):
        rng = np.random.default_rng(999)
        err = OP_CHECKS[op_name](rng, 20)
    assert err < 1e-4, f"{op_name}: max relative error {err:.3e}"


def test_finite_difference_tiny_model():
    err = check_tiny_model(seed=7)
    assert err < 1e-4, f"tiny model end-to-end: max relative error {err:.3e}"


def test_run_all_reports_every_op():
    results = run_all(instances=2, include_model=False)
    assert {r.name for r in results} == set(OP_CHECKS)
    assert all(r.passed for r in results)
