"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


@dataclass
class AdamWConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ConfigError("betas must lie in (0, 1)")
        if self.learning_rate <= 0.0 or self.epsilon <= 0.0 or self.weight_decay < 0.0:
            raise ConfigError("learning_rate/epsilon must be positive, weight_decay >= 0")


class AdamW:
    """Decay is applied to the weights directly, never folded into the
    gradient moment estimates."""

    def __init__(self, params: Iterable[Tensor], config: AdamWConfig | None = None):
        self.params = [p for p in params if p.requires_grad]
        self.config = config or AdamWConfig()
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        cfg = self.config
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            if cfg.weight_decay:
                p.data -= cfg.learning_rate * cfg.weight_decay * p.data
            p.data -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
            if not np.isfinite(p.data).all():
                raise FloatingPointError("non-finite parameter after optimizer step")


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    params = [p for p in params if p.requires_grad]
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0.0:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm
