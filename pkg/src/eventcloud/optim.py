"""Adam with bias correction and the cosine learning-rate schedule."""

import math

import numpy as np

from .errors import ConfigError, ShapeError


def cosine_lr(step, total_steps, lr0):
    """Cosine decay from ``lr0`` at step 0 to 0 at ``total_steps``, no warmup."""
    if lr0 <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr0}")
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    step = min(max(step, 0), total_steps)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class AdamState:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params, state, lr):
    """One Adam update in place; ``state.step`` advances by exactly one."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    params = list(params)
    if len(params) != len(state.m):
        raise ShapeError(f"{len(params)} params but optimizer state holds {len(state.m)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.data.shape:
            raise ShapeError(f"state shape {m.shape} != param {p.name} shape {p.data.shape}")
        g = p.grad
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.eps
        p.data -= (lr / c1) * m / denom


class Adam:
    """Convenience wrapper holding the parameter list and its state."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.state = AdamState(params, beta1, beta2, eps)

    @property
    def params(self):
        return self.state.params

    def step(self, lr):
        adam_step(self.state.params, self.state, lr)

    def zero_grad(self):
        for p in self.state.params:
            p.grad = None
