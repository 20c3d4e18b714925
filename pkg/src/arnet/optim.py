"""Bias-corrected Adam over lists of autodiff parameters."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p.data) for p in params],
                   [np.zeros_like(p.data) for p in params], 0)


def adam_step(params, grads, state, config):
    """One in-place Adam update of ``params`` (Values) from ``grads`` (arrays)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and Adam moments must align")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} does not match parameter {p.data.shape}")
        g = g.astype(p.data.dtype, copy=False)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (config.lr / bc1) * m / (np.sqrt(v / bc2) + config.eps)


class Adam:
    """Parameters, their moments and the hyperparameters in one place."""

    def __init__(self, params, config=None, state=None):
        self.params = list(params)
        self.config = config or AdamConfig()
        self.state = state or AdamState.for_params(self.params)

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.config)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
