"""Adam with L2 weight decay folded into the gradient."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .exceptions import ParameterError, StateError
from .tensor import Parameter


class Adam:
    """Adam optimizer.

    Weight decay is applied as ``grad += weight_decay * param`` before the
    moment update.  Gradients are zeroed after every step.
    """

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        if len({id(p) for p in self.params}) != len(self.params):
            raise ParameterError("a parameter was registered with the optimizer more than once")
        if lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        if weight_decay < 0:
            raise ParameterError(f"weight decay must be non-negative, got {weight_decay}")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise StateError("parameter has no gradient buffer; was requires_grad switched off?")
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.zero_grad()
