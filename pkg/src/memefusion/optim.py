"""Decoupled-weight-decay Adam and the linear warmup/decay schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .config import TrainConfig


class NonFiniteGradientError(FloatingPointError):
    pass


def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    return int(math.floor(warmup_fraction * total_steps + 0.5))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """0 -> peak over [0, warmup], then peak -> 0 over [warmup, total]."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warm = warmup_steps(total_steps, cfg.warmup_fraction)
    if step < warm:
        return cfg.lr * step / warm
    if step == warm:
        return cfg.lr
    return cfg.lr * (total_steps - step) / (total_steps - warm)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState, lr: float, cfg: TrainConfig) -> None:
    """In-place update of ``params``; decay is applied to the weights, not folded into the gradient."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if cfg.weight_decay:
            p -= lr * cfg.weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


class AdamW:
    def __init__(self, named_params, cfg: TrainConfig):
        self.params: dict[str, Tensor] = dict(named_params)
        self.cfg = cfg
        self.state = OptimizerState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        adamw_step(
            {k: p.data for k, p in self.params.items()},
            {k: p.grad for k, p in self.params.items()},
            self.state,
            lr,
            self.cfg,
        )
