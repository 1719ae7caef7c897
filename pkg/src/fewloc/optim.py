"""Adam and the step-decay learning-rate schedule."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor


def step_decay_lr(lr0: float, epoch: int, factor: float = 0.25, every: int = 80) -> float:
    """Learning rate after ``epoch`` completed epochs: lr0 * factor**(epoch // every)."""
    return lr0 * factor ** (epoch // every)


class Adam:
    """Bias-corrected adaptive-moment updates over a name -> Tensor mapping."""

    def __init__(self, params: Mapping[str, Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if lr:
                p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
