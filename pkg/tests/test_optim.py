"""Adam and the multi-step LR schedule."""

import numpy as np
import pytest

from beamcast import tensor as T
from beamcast.optim import Adam, LrSchedule, lr_at
from beamcast.tensor import Parameter, Tensor


def test_adam_first_step_matches_bias_corrected_form():
    p = Parameter("w", np.zeros(5))
    p.tensor.grad = np.ones(5)
    opt = Adam([p], lr=0.01)
    opt.step()
    # after bias correction m_hat = v_hat = 1 => delta ~ -lr
    np.testing.assert_allclose(p.data, -0.01 * np.ones(5), rtol=1e-7)


def test_adam_zero_grad_no_change():
    p = Parameter("w", np.full(3, 1.5))
    p.tensor.grad = np.zeros(3)
    Adam([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, 1.5)


def test_adam_descends_convex_quadratic():
    p = Parameter("x", np.array([1.0]))
    opt = Adam([p], lr=0.1)
    losses = []
    for _ in range(2):
        loss = T.mul(p.tensor, p.tensor)
        losses.append(loss.item())
        loss.backward()
        opt.step()
    final = (p.data[0]) ** 2
    assert final < losses[0] and losses[1] < losses[0]


def test_adam_clears_grads_and_counts_steps():
    p = Parameter("w", np.zeros(2))
    opt = Adam([p], lr=0.01)
    p.tensor.grad = np.ones(2)
    opt.step()
    assert p.tensor.grad is None
    assert opt.step_count == 1


def test_adam_missing_grad_errors():
    p = Parameter("w", np.zeros(2))
    opt = Adam([p], lr=0.01)
    with pytest.raises(ValueError):
        opt.step()


def test_adam_rejects_frozen_parameters():
    frozen = Parameter("f", np.zeros(2), trainable=False)
    with pytest.raises(ValueError):
        Adam([frozen])


def test_frozen_parameter_bit_identical_under_training():
    frozen = Parameter("f", np.arange(4.0), trainable=False)
    live = Parameter("w", np.zeros(4))
    before = frozen.data.tobytes()
    opt = Adam([live], lr=0.05)
    for _ in range(10):
        loss = T.sum_(T.mul(T.add(live.tensor, frozen.tensor), T.add(live.tensor, frozen.tensor)))
        loss.backward()
        opt.step()
    assert frozen.data.tobytes() == before
    assert frozen.tensor.grad is None


def test_lr_schedule_closed_form_defaults():
    sched = LrSchedule()
    assert lr_at(sched, 0) == pytest.approx(0.01)
    assert lr_at(sched, 1) == pytest.approx(0.009)
    assert lr_at(sched, 41) == pytest.approx(0.01 * 0.9**8)
    assert lr_at(sched, 200) == pytest.approx(0.01 * 0.9**8)
    assert lr_at(sched, 200) == pytest.approx(0.004304672, abs=1e-8)


def test_lr_schedule_non_increasing_piecewise_constant():
    sched = LrSchedule()
    values = [lr_at(sched, e) for e in range(60)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    # constant between milestones
    for lo, hi in [(1, 5), (5, 10), (40, 60)]:
        segment = values[lo:hi]
        assert len(set(segment)) == 1


def test_lr_schedule_rejects_bad_milestones():
    with pytest.raises(ValueError):
        LrSchedule(milestones=(5, 5, 10))
    with pytest.raises(ValueError):
        lr_at(LrSchedule(), -1)
