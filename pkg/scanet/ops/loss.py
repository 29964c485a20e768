from typing import Sequence

import numpy as np

from ..base import Function, Tensor
from ..errors import ArgumentError, DimensionError
from ..simple_registry import register_op

PROBABILITY_FLOOR = 1e-7


@register_op
class CrossEntropy(Function):
    """Mean negative log-likelihood of class probabilities, floored at 1e-7."""

    op_name = "cross_entropy"

    def forward(self, probabilities):
        labels = self.attrs["labels"]
        if probabilities.ndim != 2 or probabilities.shape[0] != labels.size:
            raise DimensionError(
                f"cross_entropy: probabilities {probabilities.shape} do not match {labels.size} labels"
            )
        rows = np.arange(labels.size)
        picked = probabilities[rows, labels]
        clipped = np.maximum(picked, probabilities.dtype.type(PROBABILITY_FLOOR))
        self.save(rows=rows, picked=picked, clipped=clipped, shape=probabilities.shape)
        return np.asarray(-np.log(clipped).mean(), dtype=probabilities.dtype)

    def backward(self, grad):
        labels, rows = self.attrs["labels"], self.saved["rows"]
        picked, clipped = self.saved["picked"], self.saved["clipped"]
        out = np.zeros(self.saved["shape"], dtype=grad.dtype)
        live = picked >= PROBABILITY_FLOOR
        out[rows, labels] = np.where(live, -1.0 / (clipped * labels.size), 0.0) * grad
        return (out,)


def cross_entropy(probabilities, labels: Sequence[int]) -> Tensor:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ArgumentError(f"cross_entropy: expected a non-empty 1D label list, got shape {labels.shape}")
    num_classes = probabilities.shape[-1]
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= num_classes:
        raise ArgumentError(f"cross_entropy: labels must be integers in [0, {num_classes}), got {labels.tolist()}")
    return CrossEntropy.apply(probabilities, labels=labels.astype(np.intp))
