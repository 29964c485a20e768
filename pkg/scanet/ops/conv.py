"""
Convolution and pooling via im2col.
"""

from typing import Optional, Tuple

import numpy as np

from ..base import Function, Tensor
from ..errors import ArgumentError, DimensionError
from ..settings import Settings
from ..simple_registry import register_op


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(images: np.ndarray, kernel_h: int, kernel_w: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Unfold (N, C, H, W) into rows of receptive fields, shape (N*out_h*out_w, C*kernel_h*kernel_w).

    Columns are ordered (channel, kernel row, kernel col) row-major.
    """
    n, c, h, w = images.shape
    out_h = conv_output_size(h, kernel_h, stride, padding)
    out_w = conv_output_size(w, kernel_w, stride, padding)
    padded = np.pad(images, [(0, 0), (0, 0), (padding, padding), (padding, padding)], "constant")
    col = np.zeros((n, c, kernel_h, kernel_w, out_h, out_w), dtype=images.dtype)
    for y in range(kernel_h):
        y_max = y + stride * out_h
        for x in range(kernel_w):
            x_max = x + stride * out_w
            col[:, :, y, x, :, :] = padded[:, :, y:y_max:stride, x:x_max:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1)


def col2im(col: np.ndarray, image_shape: Tuple[int, int, int, int], kernel_h: int, kernel_w: int,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Fold receptive-field rows back onto the image, summing overlaps (adjoint of im2col)."""
    n, c, h, w = image_shape
    out_h = conv_output_size(h, kernel_h, stride, padding)
    out_w = conv_output_size(w, kernel_w, stride, padding)
    col = col.reshape(n, out_h, out_w, c, kernel_h, kernel_w).transpose(0, 3, 4, 5, 1, 2)
    padded = np.zeros((n, c, h + 2 * padding + stride - 1, w + 2 * padding + stride - 1), dtype=col.dtype)
    for y in range(kernel_h):
        y_max = y + stride * out_h
        for x in range(kernel_w):
            x_max = x + stride * out_w
            padded[:, :, y:y_max:stride, x:x_max:stride] += col[:, :, y, x, :, :]
    return padded[:, :, padding:padding + h, padding:padding + w]


def _check_window(op: str, shape, kernel_h: int, kernel_w: int, stride: int, padding: int):
    if stride < 1:
        raise ArgumentError(f"{op}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ArgumentError(f"{op}: padding must be >= 0, got {padding}")
    h, w = shape[-2:]
    if kernel_h > h + 2 * padding or kernel_w > w + 2 * padding:
        raise DimensionError(
            f"{op}: kernel {kernel_h}x{kernel_w} is larger than padded input "
            f"{h + 2 * padding}x{w + 2 * padding} (input shape {tuple(shape)})"
        )


@register_op
class Conv2d(Function):
    """2D cross-correlation of (B, C, H, W) with (F, C, kh, kw) kernels, optional (F,) bias."""

    op_name = "conv2d"

    def forward(self, images, kernels, bias=None):
        stride, padding = self.attrs["stride"], self.attrs["padding"]
        if images.ndim != 4 or kernels.ndim != 4:
            raise DimensionError(f"conv2d: expected 4D input and kernels, got {images.shape} and {kernels.shape}")
        if images.shape[1] != kernels.shape[1]:
            raise DimensionError(
                f"conv2d: input channels {images.shape[1]} do not match kernel channels "
                f"(input {images.shape}, kernels {kernels.shape})"
            )
        if bias is not None and bias.shape != (kernels.shape[0],):
            raise DimensionError(f"conv2d: bias shape {bias.shape} does not match kernels {kernels.shape}")
        n, _, h, w = images.shape
        f, _, kh, kw = kernels.shape
        _check_window(self.op_name, images.shape, kh, kw, stride, padding)
        out_h = conv_output_size(h, kh, stride, padding)
        out_w = conv_output_size(w, kw, stride, padding)

        acc = Settings.accumulate_dtype
        col = im2col(images.astype(acc), kh, kw, stride, padding)
        flat_kernels = kernels.reshape(f, -1).astype(acc)
        out = col @ flat_kernels.T
        if bias is not None:
            out += bias.astype(acc)
        self.save(col=col, flat_kernels=flat_kernels, image_shape=images.shape,
                  kernel_shape=kernels.shape, has_bias=bias is not None)
        out = out.reshape(n, out_h, out_w, f).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out).astype(images.dtype)

    def backward(self, grad):
        stride, padding = self.attrs["stride"], self.attrs["padding"]
        col, flat_kernels = self.saved["col"], self.saved["flat_kernels"]
        f, _, kh, kw = self.saved["kernel_shape"]
        dtype = grad.dtype
        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, f).astype(col.dtype)
        grad_kernels = (grad_rows.T @ col).reshape(self.saved["kernel_shape"]).astype(dtype)
        grad_col = grad_rows @ flat_kernels
        grad_images = col2im(grad_col, self.saved["image_shape"], kh, kw, stride, padding).astype(dtype)
        if self.saved["has_bias"]:
            return grad_images, grad_kernels, grad_rows.sum(axis=0).astype(dtype)
        return grad_images, grad_kernels


@register_op
class MaxPool2d(Function):
    """Max pooling; the gradient goes to the first maximum of each window in row-major order."""

    op_name = "max_pool2d"

    def forward(self, images):
        kernel, stride = self.attrs["kernel"], self.attrs["stride"]
        if images.ndim != 4:
            raise DimensionError(f"max_pool2d: expected 4D input, got {images.shape}")
        _check_window(self.op_name, images.shape, kernel, kernel, stride, 0)
        n, c, h, w = images.shape
        out_h = conv_output_size(h, kernel, stride, 0)
        out_w = conv_output_size(w, kernel, stride, 0)
        col = im2col(images.reshape(n * c, 1, h, w), kernel, kernel, stride, 0)
        argmax = np.argmax(col, axis=1)
        self.save(argmax=argmax, col_shape=col.shape, image_shape=images.shape)
        out = col[np.arange(col.shape[0]), argmax]
        return out.reshape(n, c, out_h, out_w)

    def backward(self, grad):
        kernel, stride = self.attrs["kernel"], self.attrs["stride"]
        n, c, h, w = self.saved["image_shape"]
        argmax = self.saved["argmax"]
        grad_col = np.zeros(self.saved["col_shape"], dtype=grad.dtype)
        grad_col[np.arange(argmax.size), argmax] = grad.reshape(-1)
        grad_images = col2im(grad_col, (n * c, 1, h, w), kernel, kernel, stride, 0)
        return (grad_images.reshape(n, c, h, w),)


def conv2d(images, kernels, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    if bias is None:
        return Conv2d.apply(images, kernels, stride=stride, padding=padding)
    return Conv2d.apply(images, kernels, bias, stride=stride, padding=padding)


def max_pool2d(images, kernel: int = 2, stride: Optional[int] = None) -> Tensor:
    return MaxPool2d.apply(images, kernel=kernel, stride=stride or kernel)
