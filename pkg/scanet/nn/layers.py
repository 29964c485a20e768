"""
Parameterized layers. Every initializer draws from the numpy Generator it is
given, so a model is a pure function of its build seed.
"""

import math
from typing import Optional

import numpy as np

from .. import ops
from ..base import Parameter, Tensor
from ..settings import Settings
from .module import Module


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(Settings.dtype)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.weight = Parameter(_uniform(rng, bound, (in_features, out_features)))
        self.bias = Parameter(_uniform(rng, bound, (out_features,))) if bias else None
        self.in_features, self.out_features = in_features, out_features

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def extra_repr(self):
        return f"{self.in_features}, {self.out_features}"


class Conv2d(Module):
    """Square-kernel convolution with He-normal weights."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: Optional[int] = None, bias: bool = True):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        weight = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(out_channels, in_channels, kernel_size, kernel_size))
        self.weight = Parameter(weight.astype(Settings.dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=Settings.dtype)) if bias else None
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.kernel_size = kernel_size

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def extra_repr(self):
        out_channels, in_channels = self.weight.shape[:2]
        return f"{in_channels}, {out_channels}, kernel={self.kernel_size}, stride={self.stride}"


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(channels, dtype=Settings.dtype))
        self.bias = Parameter(np.zeros(channels, dtype=Settings.dtype))
        self.groups = groups
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.group_norm(x, self.gain, self.bias, groups=self.groups, eps=self.eps)

    def extra_repr(self):
        return f"{self.gain.shape[0]}, groups={self.groups}"


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(features, dtype=Settings.dtype))
        self.bias = Parameter(np.zeros(features, dtype=Settings.dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Dropout(Module):
    """Inverted dropout, active only in training mode."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.rate, self.rng, training=self.training)


class Mlp(Module):
    """Two linear layers with a ReLU in between."""

    def __init__(self, features: int, hidden: int, rng: np.random.Generator, dropout: float = 0.0):
        super().__init__()
        self.fc_in = Linear(features, hidden, rng)
        self.fc_out = Linear(hidden, features, rng)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.dropout(self.fc_out(ops.relu(self.fc_in(x))))
