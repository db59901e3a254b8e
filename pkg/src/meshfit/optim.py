"""First-order optimizers over lists of numpy arrays.

``step`` returns the update to subtract from each parameter, so callers
decide how to apply it (masking frozen coordinates, for instance).
"""
import numpy as np

from .errors import ConfigError


class GradientDescent:
    def __init__(self, lr):
        self.lr = lr

    def init(self, shapes):
        return {}

    def step(self, params, grads, state):
        return [self.lr * g for g in grads]


class Adam:
    def __init__(self, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps

    def init(self, shapes):
        return {"t": 0, "m": [np.zeros(s) for s in shapes], "v": [np.zeros(s) for s in shapes]}

    def step(self, params, grads, state):
        state["t"] += 1
        t = state["t"]
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        out = []
        for g, m, v in zip(grads, state["m"], state["v"]):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            out.append(self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


def make_optimizer(name, lr, betas=(0.9, 0.999), eps=1e-8):
    if name == "adam":
        return Adam(lr, betas, eps)
    if name in ("gd", "gradient_descent", "sgd"):
        return GradientDescent(lr)
    raise ConfigError(f"unknown optimizer {name!r}")
