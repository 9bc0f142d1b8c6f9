"""First-order optimizers updating a dict of parameter arrays in place."""

from __future__ import annotations

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


def _check_finite(grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NonFiniteGradient(f"gradient of {name} has {bad} non-finite entries")


class Optimizer:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        _check_finite(grads)
        self.t += 1
        for name, g in grads.items():
            self._update(name, params[name], g)

    def _update(self, name, p, g):
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, name, p, g):
        p -= self.lr * g


class Adagrad(Optimizer):
    def __init__(self, lr: float, eps: float = 1e-10):
        super().__init__(lr)
        self.eps = eps
        self.sum_sq: dict[str, np.ndarray] = {}

    def _update(self, name, p, g):
        acc = self.sum_sq.setdefault(name, np.zeros_like(p))
        acc += g * g
        p -= self.lr * g / (np.sqrt(acc) + self.eps)


class Adam(Optimizer):
    """Adam with bias correction.

    ``p -= lr * m_hat / (sqrt(v_hat) + eps)`` with ``m_hat = m / (1 - beta1^t)``
    and ``v_hat = v / (1 - beta2^t)``. Moments are per tensor, so tensors never
    influence each other.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self._scratch: dict[str, np.ndarray] = {}

    def _update(self, name, p, g):
        b1, b2 = self.beta1, self.beta2
        m = self.m.setdefault(name, np.zeros_like(p))
        v = self.v.setdefault(name, np.zeros_like(p))
        tmp = self._scratch.setdefault(name, np.empty_like(p))
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        # in place to avoid temporaries on the large stem weight
        m *= b1
        np.multiply(g, 1.0 - b1, out=tmp)
        m += tmp
        v *= b2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v += tmp
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += self.eps
        np.divide(m, tmp, out=tmp)
        tmp *= self.lr / c1
        p -= tmp


def adam_step(params: dict, grads: dict, state: Adam | None = None, lr: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Adam:
    """Functional wrapper: one Adam update, returning the (possibly new) state."""
    if state is None:
        state = Adam(lr, beta1, beta2, eps)
    state.step(params, grads)
    return state


def make_optimizer(name: str, lr: float) -> Optimizer:
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    if name == "adagrad":
        return Adagrad(lr)
    raise ValueError(f"unknown optimizer {name!r}")
