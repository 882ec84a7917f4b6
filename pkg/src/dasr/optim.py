"""Bias-corrected Adam over a fixed parameter list."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor
from .errors import DimensionError, NumericsError


class Adam:
    """Standard Adam. ``lr`` is a plain attribute so schedules can reassign it.

    State tensors (first/second moments) mirror the parameter shapes; the step
    counter starts at 0 and increases by exactly 1 per successful step. A
    non-finite gradient aborts the step before any state is touched.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params: list[Tensor] = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def _gradients(self):
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise DimensionError(
                    f"gradient shape {g.shape} does not match parameter shape "
                    f"{p.data.shape} (param {i})"
                )
            grads.append(g)
        return grads

    def step(self):
        grads = self._gradients()
        for i, g in enumerate(grads):
            if not np.isfinite(g).all():
                raise NumericsError(f"non-finite gradient in parameter {i}; step aborted")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def halved_lr(base_lr: float, epoch: int, every: int = 100) -> float:
    """Learning rate halved once per ``every`` completed epochs (epoch >= 1)."""
    return base_lr * 0.5 ** (epoch // every)
