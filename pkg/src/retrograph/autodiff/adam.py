"""Adam with plateau-triggered learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.9
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState) -> None:
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for name, p in store.items():
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[name]
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)


class PlateauDecay:
    """Multiply the learning rate by ``state.decay`` when the monitored
    metric has not improved by ``min_delta`` for ``patience`` consecutive
    calls to ``update`` (one per evaluation)."""

    def __init__(self, state: AdamState, patience: int = 10, min_delta: float = 0.01):
        self.state = state
        self.patience = patience
        self.min_delta = min_delta
        self.best = -np.inf
        self.wait = 0

    def update(self, metric: float) -> bool:
        if metric >= self.best + self.min_delta:
            self.best = metric
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.state.lr *= self.state.decay
            self.wait = 0
            return True
        return False
