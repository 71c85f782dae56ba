"""Decoupled-weight-decay adaptive optimizer (AdamW)."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from tools.errors import TrainingError
from tools.params import ModelParams


@dataclass
class AdamWConfig:
    """AdamW hyperparameters."""
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    eps: float = 1e-8

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr <= 0:
            raise TrainingError(f"Learning rate must be positive, got {self.lr}")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise TrainingError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise TrainingError(f"weight_decay must be non-negative, got {self.weight_decay}")


@dataclass
class MomentBuffers:
    first: Dict[str, np.ndarray]
    second: Dict[str, np.ndarray]


def adamw_step(params: ModelParams,
               grads: Dict[str, np.ndarray],
               lr: float,
               betas: Tuple[float, float],
               weight_decay: float,
               t: int,
               state: MomentBuffers,
               eps: float = 1e-8):
    """
    Apply one AdamW update in place.

    Args:
        params: Parameters to update; frozen names are left untouched
        grads: Gradient per parameter name (missing names count as zero)
        lr: Learning rate, > 0
        betas: Exponential decay rates of the first and second moments
        weight_decay: Decoupled decay coefficient
        t: 1-based step index used for bias correction
        state: Moment buffers, updated in place
        eps: Denominator stabilizer
    """
    if lr <= 0:
        raise TrainingError(f"Learning rate must be positive, got {lr}")
    if t < 1:
        raise TrainingError(f"Step index must be >= 1, got {t}")
    beta1, beta2 = betas
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    for name, tensor in params.named():
        if params.is_frozen(name):
            continue
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        m = state.first.setdefault(name, np.zeros_like(tensor.data))
        v = state.second.setdefault(name, np.zeros_like(tensor.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g

        data = tensor.data
        if weight_decay:
            data = data * (1.0 - lr * weight_decay)
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data = data - lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """Stateful wrapper owning moment buffers and the step counter."""

    def __init__(self, params: ModelParams, config: Optional[AdamWConfig] = None):
        self.params = params
        self.config = config or AdamWConfig()
        self.state = MomentBuffers(first={}, second={})
        self.t = 0

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None):
        """Update from explicit grads, or from each parameter's `.grad` buffer."""
        if grads is None:
            grads = {name: t.grad for name, t in self.params.named() if t.grad is not None}
        self.t += 1
        adamw_step(
            self.params, grads,
            lr=self.config.lr,
            betas=self.config.betas,
            weight_decay=self.config.weight_decay,
            t=self.t,
            state=self.state,
            eps=self.config.eps,
        )
