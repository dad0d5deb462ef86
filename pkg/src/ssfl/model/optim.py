"""SGD with momentum and the warmup + cosine learning-rate schedule."""
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from .state import ParameterState


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 0.03
    period_coeff: float = 0.4375
    epochs: int = 100
    samples_per_epoch: int = 65536
    batch_size: int = 64
    warmup_epochs: float = 0
    floor: float = 1e-4

    def __post_init__(self):
        if self.base_lr <= 0:
            raise InvalidInputError("base_lr must be positive")
        if not 0 < self.floor < 1:
            raise InvalidInputError("floor must lie in (0, 1)")
        if self.samples_per_epoch < self.batch_size or self.batch_size < 1:
            raise InvalidInputError("need samples_per_epoch >= batch_size >= 1")
        if self.epochs <= 0 or self.warmup_epochs < 0 or self.warmup_epochs >= self.epochs:
            raise InvalidInputError("need 0 <= warmup_epochs < epochs")

    @property
    def steps_per_epoch(self):
        return self.samples_per_epoch / self.batch_size

    @property
    def total_steps(self):
        return self.epochs * self.steps_per_epoch

    @property
    def warmup_steps(self):
        return self.warmup_epochs * self.steps_per_epoch


@dataclass(frozen=True)
class OptimizerConfig:
    schedule: LrSchedule = field(default_factory=LrSchedule)
    momentum_coeff: float = 0.9
    weight_decay: float = 1e-4

    def __post_init__(self):
        if not 0 <= self.momentum_coeff < 1:
            raise InvalidInputError("momentum_coeff must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be non-negative")


def cosine_lr(t, s):
    """Learning rate at step ``t``: linear warmup to ``base_lr``, then cosine
    decay clamped below at ``base_lr * floor``."""
    total, warm = s.total_steps, s.warmup_steps
    if t < 0 or t >= total:
        raise InvalidInputError(f"step {t} outside schedule [0, {total})")
    if t < warm:
        return s.base_lr * (t + 1) / warm
    phase = math.pi * s.period_coeff * (t - warm) / (total - warm)
    return s.base_lr * max(math.cos(phase), s.floor)


def sgd_step(state, gradient, lr, cfg):
    """One coupled-weight-decay momentum step; returns a new state."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != state.weights.shape:
        raise InvalidInputError(
            f"gradient length {gradient.shape} does not match weights {state.weights.shape}"
        )
    buf = cfg.momentum_coeff * state.momentum + (gradient + cfg.weight_decay * state.weights)
    return ParameterState(state.spec, state.weights - lr * buf, buf, state.norm_stats.copy())
