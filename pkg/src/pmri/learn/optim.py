"""Adam over the flat parameter vector.

Update: m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected
m_hat, v_hat;  theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteGradient


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_size(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              cfg: AdamConfig) -> None:
    """One in-place Adam update; raises on non-finite gradients."""
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient vector contains NaN/Inf")
    state.t += 1
    state.m *= cfg.beta1
    state.m += (1 - cfg.beta1) * grads
    state.v *= cfg.beta2
    state.v += (1 - cfg.beta2) * grads * grads
    m_hat = state.m / (1 - cfg.beta1 ** state.t)
    v_hat = state.v / (1 - cfg.beta2 ** state.t)
    params -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if not np.all(np.isfinite(params)):
        raise NonFiniteGradient("parameters became non-finite after update")
