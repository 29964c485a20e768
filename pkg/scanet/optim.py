"""
Adam with decoupled weight decay.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .base import Tensor
from .errors import ArgumentError, DimensionError


@dataclass
class OptimizerState:
    """First/second moment buffers per parameter and the step counter."""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "OptimizerState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], t=0)


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]], state: OptimizerState,
               lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0):
    """Update ``params`` in place.

    Decay is decoupled and applied first, ``w <- w - lr*wd*w``, then the
    bias-corrected Adam delta. A ``None`` gradient counts as zero.
    """
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ArgumentError(f"betas must lie in [0, 1), got ({beta1}, {beta2})")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError(
            f"adamw_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers"
        )
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for index, param in enumerate(params):
        grad = grads[index]
        if grad is None:
            grad = np.zeros_like(param)
        if grad.shape != param.shape or state.m[index].shape != param.shape:
            raise DimensionError(f"adamw_step: parameter {index} has shape {param.shape}, grad {grad.shape}")
        weights = param.astype(np.float64)
        grad64 = grad.astype(np.float64)
        m = beta1 * state.m[index] + (1.0 - beta1) * grad64
        v = beta2 * state.v[index] + (1.0 - beta2) * grad64 * grad64
        state.m[index][...] = m
        state.v[index][...] = v
        weights -= lr * weight_decay * weights
        weights -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param[...] = weights


class AdamW:
    """Optimizer object over a list of trainable tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = OptimizerState.zeros_like([p.data for p in self.params])

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

    def step(self):
        adamw_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            lr=self.lr,
            beta1=self.betas[0],
            beta2=self.betas[1],
            eps=self.eps,
            weight_decay=self.weight_decay,
        )
