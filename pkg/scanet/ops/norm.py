"""
Softmax and normalization primitives with fused backward passes.
"""

import numpy as np

from ..base import Function, Tensor
from ..errors import ArgumentError, DimensionError, NumericError
from ..simple_registry import register_op


def _standardize_backward(dxhat: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, axis) -> np.ndarray:
    mean_dxhat = dxhat.mean(axis=axis, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=axis, keepdims=True)
    return rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


@register_op
class Softmax(Function):
    op_name = "softmax"

    def forward(self, x):
        axis = self.attrs["axis"]
        if x.shape[axis] < 1:
            raise DimensionError(f"softmax: axis {axis} of shape {x.shape} is empty")
        if not np.all(np.isfinite(x)):
            raise NumericError(f"softmax: non-finite input (shape {x.shape})")
        shifted = x - x.max(axis=axis, keepdims=True)
        exp = np.exp(shifted)
        out = exp / exp.sum(axis=axis, keepdims=True)
        self.save(out=out)
        return out

    def backward(self, grad):
        out = self.saved["out"]
        inner = (grad * out).sum(axis=self.attrs["axis"], keepdims=True)
        return (out * (grad - inner),)


@register_op
class LayerNorm(Function):
    """Standardize over the last axis, then apply per-feature gain and bias."""

    op_name = "layer_norm"

    def forward(self, x, gain, bias):
        d = x.shape[-1]
        if gain.shape != (d,) or bias.shape != (d,):
            raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match input {x.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        rstd = 1.0 / np.sqrt(var + self.attrs["eps"])
        xhat = (x - mu) * rstd
        self.save(xhat=xhat, rstd=rstd, gain=gain)
        return xhat * gain + bias

    def backward(self, grad):
        xhat, rstd, gain = self.saved["xhat"], self.saved["rstd"], self.saved["gain"]
        lead = tuple(range(grad.ndim - 1))
        grad_x = _standardize_backward(grad * gain, xhat, rstd, axis=-1)
        return grad_x, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


@register_op
class GroupNorm(Function):
    """Standardize (N, C, ...) over channel groups and spatial axes, then per-channel affine."""

    op_name = "group_norm"

    def forward(self, x, gain, bias):
        groups = self.attrs["groups"]
        n, c = x.shape[:2]
        if c % groups != 0:
            raise DimensionError(f"group_norm: {c} channels cannot be split into {groups} groups")
        if gain.shape != (c,) or bias.shape != (c,):
            raise DimensionError(f"group_norm: gain {gain.shape} / bias {bias.shape} do not match input {x.shape}")
        grouped = x.reshape(n, groups, -1)
        mu = grouped.mean(axis=-1, keepdims=True)
        var = ((grouped - mu) ** 2).mean(axis=-1, keepdims=True)
        rstd = 1.0 / np.sqrt(var + self.attrs["eps"])
        xhat = ((grouped - mu) * rstd).reshape(x.shape)
        channel_shape = (1, c) + (1,) * (x.ndim - 2)
        self.save(xhat=xhat, rstd=rstd, gain=gain.reshape(channel_shape))
        return xhat * gain.reshape(channel_shape) + bias.reshape(channel_shape)

    def backward(self, grad):
        xhat, rstd, gain = self.saved["xhat"], self.saved["rstd"], self.saved["gain"]
        n, groups = grad.shape[0], self.attrs["groups"]
        reduce_axes = (0,) + tuple(range(2, grad.ndim))
        dxhat = (grad * gain).reshape(n, groups, -1)
        grad_x = _standardize_backward(dxhat, xhat.reshape(n, groups, -1), rstd, axis=-1).reshape(grad.shape)
        return grad_x, (grad * xhat).sum(axis=reduce_axes), grad.sum(axis=reduce_axes)


def softmax(x, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ArgumentError(f"layer_norm: eps must be positive, got {eps}")
    return LayerNorm.apply(x, gain, bias, eps=eps)


def group_norm(x, gain, bias, groups: int, eps: float = 1e-5) -> Tensor:
    if groups < 1:
        raise ArgumentError(f"group_norm: groups must be >= 1, got {groups}")
    return GroupNorm.apply(x, gain, bias, groups=groups, eps=eps)
