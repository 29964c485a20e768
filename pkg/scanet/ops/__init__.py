# Differentiable primitives. Every Function registers in OP_REGISTRY on import.

from .basic import (
    add, sub, mul, neg, scale, relu, reshape, flatten, transpose,
    sum, mean, mean_pool, take, dropout,
)
from .linalg import matmul, linear, accumulate_matmul
from .conv import conv2d, max_pool2d, im2col, col2im, conv_output_size
from .norm import softmax, layer_norm, group_norm
from .loss import cross_entropy, PROBABILITY_FLOOR

__all__ = [
    "add", "sub", "mul", "neg", "scale", "relu", "reshape", "flatten", "transpose",
    "sum", "mean", "mean_pool", "take", "dropout",
    "matmul", "linear", "accumulate_matmul",
    "conv2d", "max_pool2d", "im2col", "col2im", "conv_output_size",
    "softmax", "layer_norm", "group_norm",
    "cross_entropy", "PROBABILITY_FLOOR",
]
