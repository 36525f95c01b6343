"""Adam with bias correction and optional L2 weight decay."""

from __future__ import annotations

import numpy as np

from .layers import Param, ShapeError


def adam_step(value, grad, m, v, t, lr=1e-4, beta1=0.9, beta2=0.999,
              eps=1e-8, weight_decay=0.0):
    """One in-place Adam update; t is the 1-based step count.

    weight_decay enters as an L2 term added to the gradient before the
    moment updates.
    """
    if grad.shape != value.shape or m.shape != value.shape or v.shape != value.shape:
        raise ShapeError("parameter, gradient and state shapes must agree")
    if weight_decay:
        grad = grad + weight_decay * value
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params: list, lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = [p for p in params if isinstance(p, Param)]
        if len(self.params) != len(params):
            raise TypeError("Adam expects a list of Param objects")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self._m, self._v):
            adam_step(p.value, p.grad, m, v, self.t, self.lr, self.beta1,
                      self.beta2, self.eps, self.weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0
