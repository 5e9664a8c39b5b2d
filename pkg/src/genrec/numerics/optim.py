"""AdamW with decoupled weight decay and a linear-warmup learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    lr: float = 1e-5
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, state, lr_t=None, checked=False):
    """Apply one AdamW update in place to ``params`` using their ``grad``.

    ``lr_t`` overrides ``state.lr`` for this step (used by the warmup
    schedule). Moments are keyed by parameter name.
    """
    lr_t = state.lr if lr_t is None else lr_t
    if checked:
        for p in params:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p.data
        p.data -= (lr_t * update).astype(p.data.dtype)
    return params, state


@dataclass(frozen=True)
class WarmupSchedule:
    total_steps: int
    base_lr: float
    warmup_fraction: float = 0.05

    @property
    def warmup_steps(self):
        return math.ceil(self.warmup_fraction * self.total_steps)


def lr_at(schedule, step):
    """Linear ramp from 0 to ``base_lr`` over the warmup steps, then constant."""
    w = schedule.warmup_steps
    if w == 0 or step >= w:
        return schedule.base_lr
    return schedule.base_lr * step / w
