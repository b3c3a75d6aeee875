"""Optimizers and schedules for the tape-based parameter stores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ParamStore


@dataclass(frozen=True)
class ExponentialDecay:
    """Stepwise-exponential learning-rate schedule.

    The rate after k completed intervals is exactly ``base_lr * gamma**k``.
    """

    base_lr: float
    gamma: float = 0.8
    interval: int = 1000

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.base_lr <= 0.0:
            raise ValueError("base_lr must be positive")

    def lr(self, step: int) -> float:
        return self.base_lr * self.gamma ** (step // self.interval)


@dataclass(frozen=True)
class TemperatureSchedule:
    """Relaxation temperature annealed geometrically down to a floor."""

    init: float = 5.0
    decay: float = 0.9995
    floor: float = 0.1

    def at(self, step: int) -> float:
        return max(self.init * self.decay ** step, self.floor)


class Adam:
    """Adam over one parameter store, with an exponential LR schedule."""

    def __init__(self, store: ParamStore, schedule: ExponentialDecay,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.schedule = schedule
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self, global_step: int) -> None:
        """Apply one update using gradients currently held by the store."""
        self.t += 1
        lr = self.schedule.lr(global_step)
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.store.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
