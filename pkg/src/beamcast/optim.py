"""Adam optimizer and multi-step learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MILESTONES = (1, 5, 10, 15, 20, 25, 30, 40)


@dataclass
class LrSchedule:
    """Piecewise-constant decay: lr(epoch) = base_lr * gamma^(#milestones <= epoch)."""

    base_lr: float = 0.01
    milestones: tuple = DEFAULT_MILESTONES
    gamma: float = 0.9

    def __post_init__(self):
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing")
        self.milestones = ms


def lr_at(schedule, epoch):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    crossed = sum(1 for m in schedule.milestones if m <= epoch)
    return schedule.base_lr * schedule.gamma**crossed


class Adam:
    """Bias-corrected Adam over a list of trainable Parameters.

    Non-trainable parameters must not be passed in; `step()` requires every
    managed parameter to carry a gradient, applies the update, and clears
    the gradients.
    """

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        for p in self.params:
            if not p.trainable:
                raise ValueError(f"non-trainable parameter passed to Adam: {p.name}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.tensor.data) for p in self.params]
        self.v = [np.zeros_like(p.tensor.data) for p in self.params]

    def step(self, lr=None):
        if lr is None:
            lr = self.lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.tensor.grad
            if g is None:
                raise ValueError(f"parameter {p.name} has no gradient; run backward() first")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.tensor.zero_grad()
