"""Autodiff core: operator semantics, gradients, and invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamcast import tensor as T
from beamcast.errors import ShapeError
from beamcast.gradcheck import run_op_suite
from beamcast.tensor import ParamDict, Parameter, Tensor


def test_tensor_rejects_nonfinite():
    with pytest.raises(ValueError):
        Tensor([1.0, float("nan")])
    with pytest.raises(ValueError):
        Tensor([float("inf")])


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(T.matmul(eye, a).data, a.data)


def test_matmul_dot_product():
    a = Tensor([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    np.testing.assert_allclose(T.matmul(a, b).data, [[11.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_is_ones_times_b_transpose():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    T.sum_(T.matmul(a, b)).backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 5)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 5)))


def test_softmax_symmetry():
    out = T.softmax(Tensor([0.0, 0.0, 0.0]), axis=-1).data
    np.testing.assert_allclose(out, np.full(3, 1 / 3))


def test_softmax_no_overflow():
    out = T.softmax(Tensor([1000.0, 1000.0]), axis=-1).data
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_softmax_hand_values():
    out = T.softmax(Tensor([math.log(1), math.log(2), math.log(3)]), axis=-1).data
    np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=16),
)
def test_softmax_rows_sum_to_one(values):
    out = T.softmax(Tensor(np.array(values)), axis=-1).data
    assert abs(out.sum() - 1.0) <= 1e-9
    assert (out >= 0).all()


def test_layer_norm_constant_row_is_zero():
    out = T.layer_norm(Tensor([4.0, 4.0, 4.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, np.zeros(3), atol=1e-2)


def test_layer_norm_two_points():
    out = T.layer_norm(
        Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14
    )
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-6)


def test_layer_norm_zero_gain_recovers_bias():
    bias = Tensor([5.0, -2.0, 0.5])
    out = T.layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.zeros(3)), bias)
    np.testing.assert_allclose(out.data, bias.data)


def test_relu_values():
    np.testing.assert_allclose(T.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])


def test_gelu_values():
    assert T.gelu(Tensor(0.0)).item() == 0.0
    # tanh approximation evaluated directly
    x = 3.0
    c = math.sqrt(2 / math.pi)
    expected = 0.5 * x * (1 + math.tanh(c * (x + 0.044715 * x**3)))
    assert abs(T.gelu(Tensor(x)).item() - expected) < 1e-12
    assert abs(expected - 2.9964) < 5e-4


def test_cross_entropy_uniform_is_log_m():
    logits = Tensor(np.zeros(32))
    assert abs(T.cross_entropy(logits, 7).item() - math.log(32)) < 1e-12


def test_cross_entropy_perfect_prediction_tends_to_zero():
    logits = np.zeros(8)
    logits[3] = 50.0
    assert T.cross_entropy(Tensor(logits), 3).item() < 1e-12


def test_cross_entropy_closed_form():
    val = T.cross_entropy(Tensor([1.0, 0.0]), 0).item()
    assert abs(val - math.log(1 + math.exp(-1))) < 1e-12


def test_cross_entropy_bounds_and_range_check():
    rng = np.random.default_rng(3)
    for _ in range(20):
        logits = rng.normal(size=6)
        assert T.cross_entropy(Tensor(logits), 2).item() >= 0.0
    with pytest.raises(IndexError):
        T.cross_entropy(Tensor(np.zeros(4)), 4)
    with pytest.raises(IndexError):
        T.cross_entropy(Tensor(np.zeros(4)), -1)


def test_sequence_cross_entropy_matches_per_step_sum():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(3, 4, 6))
    targets = rng.integers(0, 6, size=(3, 4))
    got = T.sequence_cross_entropy(Tensor(logits), targets).item()
    expected = np.mean(
        [
            sum(T.cross_entropy(Tensor(logits[i, j]), targets[i, j]).item() for j in range(4))
            for i in range(3)
        ]
    )
    assert abs(got - expected) < 1e-10


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        T.mul(x, 2.0).backward()


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    T.mul(x, x).backward()
    assert abs(float(x.grad) - 6.0) < 1e-12


def test_no_grad_blocks_tape():
    x = Tensor(2.0, requires_grad=True)
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad and y._prev == ()


def test_op_gradients_match_finite_differences():
    errs = run_op_suite()
    worst = max(errs, key=errs.get)
    assert errs[worst] <= 1e-6, f"{worst}: {errs[worst]:.3e}"


def test_parameter_flags_and_duplicates():
    p = ParamDict()
    p.add("a.w", np.zeros(3))
    frozen = p.add("a.frozen", np.ones(2), trainable=False)
    assert not frozen.tensor.requires_grad
    assert [q.name for q in p.trainable()] == ["a.w"]
    with pytest.raises(ValueError):
        p.add("a.w", np.zeros(1))


def test_parameter_repr_roundtrip_fields():
    p = Parameter("x.y", np.ones((2, 3)), trainable=False)
    assert p.name in repr(p)
    assert p.data.shape == (2, 3)
    assert p.grad is None
