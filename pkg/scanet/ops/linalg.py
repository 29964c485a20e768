import numpy as np

from ..base import Function, Tensor, unbroadcast
from ..errors import DimensionError
from ..settings import Settings
from ..simple_registry import register_op
from .basic import add


def accumulate_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product accumulated in ``Settings.accumulate_dtype``, rounded once to the inputs' dtype."""
    out_dtype = np.result_type(a, b)
    acc = Settings.accumulate_dtype
    return np.matmul(a.astype(acc, copy=False), b.astype(acc, copy=False)).astype(out_dtype, copy=False)


@register_op
class MatMul(Function):
    """Batched matrix product ``a @ b`` over the two trailing axes, leading axes broadcast."""

    op_name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError as e:
            raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from e
        self.save(a=a, b=b)
        return accumulate_matmul(a, b)

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        grad_a = accumulate_matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = accumulate_matmul(np.swapaxes(a, -1, -2), grad)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in_features, out_features)."""
    out = MatMul.apply(x, weight)
    if bias is None:
        return out
    return add(out, bias)
