"""
Elementwise, shape and reduction primitives.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..base import Function, Tensor, unbroadcast
from ..errors import ArgumentError, DimensionError
from ..simple_registry import register_op


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


@register_op
class Add(Function):
    op_name = "add"

    def forward(self, a, b):
        _broadcast_shape(self.op_name, a, b)
        self.save(a_shape=a.shape, b_shape=b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.saved["a_shape"]), unbroadcast(grad, self.saved["b_shape"])


@register_op
class Sub(Function):
    op_name = "sub"

    def forward(self, a, b):
        _broadcast_shape(self.op_name, a, b)
        self.save(a_shape=a.shape, b_shape=b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.saved["a_shape"]), unbroadcast(-grad, self.saved["b_shape"])


@register_op
class Mul(Function):
    op_name = "mul"

    def forward(self, a, b):
        _broadcast_shape(self.op_name, a, b)
        self.save(a=a, b=b)
        return a * b

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


@register_op
class Neg(Function):
    op_name = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


@register_op
class Scale(Function):
    op_name = "scale"

    def forward(self, a):
        return a * a.dtype.type(self.attrs["factor"])

    def backward(self, grad):
        return (grad * grad.dtype.type(self.attrs["factor"]),)


@register_op
class Relu(Function):
    op_name = "relu"

    def forward(self, a):
        mask = a > 0
        self.save(mask=mask)
        return np.where(mask, a, 0).astype(a.dtype)

    def backward(self, grad):
        return (grad * self.saved["mask"],)


@register_op
class Reshape(Function):
    op_name = "reshape"

    def forward(self, a):
        self.save(shape=a.shape)
        try:
            return a.reshape(self.attrs["shape"])
        except ValueError as e:
            raise DimensionError(f"reshape: cannot view {a.shape} as {self.attrs['shape']}") from e

    def backward(self, grad):
        return (grad.reshape(self.saved["shape"]),)


@register_op
class Transpose(Function):
    op_name = "transpose"

    def forward(self, a):
        axes = self.attrs["axes"]
        if axes is None:
            axes = tuple(reversed(range(a.ndim)))
        if sorted(axes) != list(range(a.ndim)):
            raise DimensionError(f"transpose: axes {axes} are not a permutation for shape {a.shape}")
        self.save(axes=tuple(axes))
        return np.ascontiguousarray(a.transpose(axes))

    def backward(self, grad):
        inverse = np.argsort(self.saved["axes"])
        return (grad.transpose(inverse),)


@register_op
class Sum(Function):
    op_name = "sum"

    def forward(self, a):
        self.save(shape=a.shape)
        return np.sum(a, axis=self.attrs["axis"], keepdims=self.attrs["keepdims"])

    def backward(self, grad):
        shape, axis = self.saved["shape"], self.attrs["axis"]
        if axis is not None and not self.attrs["keepdims"]:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, shape).copy(),)


@register_op
class Mean(Function):
    op_name = "mean"

    def forward(self, a):
        self.save(shape=a.shape)
        axis = self.attrs["axis"]
        out = np.mean(a, axis=axis, keepdims=self.attrs["keepdims"])
        self.save(count=a.size // max(out.size, 1))
        return out

    def backward(self, grad):
        shape, axis = self.saved["shape"], self.attrs["axis"]
        if axis is not None and not self.attrs["keepdims"]:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad / self.saved["count"], shape).copy(),)


@register_op
class Take(Function):
    """Gather entries along one axis; repeated indices receive summed gradients."""

    op_name = "take"

    def forward(self, a):
        indices = np.asarray(self.attrs["indices"], dtype=np.intp)
        axis = self.attrs["axis"] % a.ndim
        if indices.size and (indices.min() < 0 or indices.max() >= a.shape[axis]):
            raise DimensionError(f"take: indices out of range for axis {axis} of shape {a.shape}")
        self.save(shape=a.shape, indices=indices, axis=axis)
        return np.take(a, indices, axis=axis)

    def backward(self, grad):
        shape, indices, axis = self.saved["shape"], self.saved["indices"], self.saved["axis"]
        out = np.zeros(shape, dtype=grad.dtype)
        index = [slice(None)] * len(shape)
        index[axis] = indices
        np.add.at(out, tuple(index), grad)
        return (out,)


@register_op
class Dropout(Function):
    op_name = "dropout"

    def forward(self, a):
        rate = self.attrs["rate"]
        keep = self.attrs["rng"].random(a.shape) >= rate
        mask = keep.astype(a.dtype) / a.dtype.type(1.0 - rate)
        self.save(mask=mask)
        return a * mask

    def backward(self, grad):
        return (grad * self.saved["mask"],)


Axis = Optional[Union[int, Tuple[int, ...]]]


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def neg(a) -> Tensor:
    return Neg.apply(a)


def scale(a, factor: float) -> Tensor:
    return Scale.apply(a, factor=float(factor))


def relu(a) -> Tensor:
    return Relu.apply(a)


def reshape(a, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def flatten(a, start_axis: int = 1) -> Tensor:
    """Collapse every axis from ``start_axis`` on into one."""
    shape = a.shape[:start_axis] + (-1,)
    return Reshape.apply(a, shape=shape)


def transpose(a, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(a, axes=tuple(axes) if axes is not None else None)


def sum(a, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(a, axis=axis, keepdims=keepdims)


def mean_pool(a) -> Tensor:
    """Global average over the two trailing (spatial) axes."""
    return Mean.apply(a, axis=(-2, -1), keepdims=False)


def take(a, indices: Sequence[int], axis: int = 0) -> Tensor:
    return Take.apply(a, indices=tuple(int(i) for i in indices), axis=axis)


def dropout(a, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    return Dropout.apply(a, rate=rate, rng=rng)
