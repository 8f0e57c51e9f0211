"""Adam with a staircase exponential learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-4
    decay_steps: int = 7500
    decay_base: float = 0.95
    batch_size: int = 20

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not (self.eps > 0 and self.lr > 0):
            raise ValueError("eps and lr must be positive")
        if self.decay_steps < 1 or not self.decay_base > 0:
            raise ValueError("decay interval must be >= 1 and decay base positive")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lr_schedule(step: int, cfg: AdamConfig = AdamConfig()) -> float:
    """``lr * base ** floor(step / decay_steps)``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return cfg.lr * cfg.decay_base ** (step // cfg.decay_steps)


@dataclass(frozen=True)
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, params):
        params = np.array(params, dtype=np.float64)
        return cls(params, np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(state: AdamState, grad, cfg: AdamConfig = AdamConfig()) -> AdamState:
    """One bias-corrected Adam update; the learning rate is ``lr_schedule(state.t)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {state.params.shape}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    lr = lr_schedule(state.t, cfg)
    params = state.params - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return replace(state, params=params, m=m, v=v, t=t)
