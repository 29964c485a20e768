from typing import Callable, Sequence

import numpy as np

from .. import ops
from ..base import Tensor
from .layers import Conv2d, GroupNorm
from .module import Module, ModuleList


class BasicBlock(Module):
    """conv3x3-norm-relu-conv3x3-norm plus skip, then relu.

    The skip is a 1x1 strided conv + norm whenever the block changes shape.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int, groups_for: Callable[[int], int],
                 rng: np.random.Generator, eps: float = 1e-5):
        super().__init__()
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, stride=stride, bias=False)
        self.norm1 = GroupNorm(out_channels, groups_for(out_channels), eps)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, bias=False)
        self.norm2 = GroupNorm(out_channels, groups_for(out_channels), eps)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, 1, rng, stride=stride, padding=0, bias=False)
            self.shortcut_norm = GroupNorm(out_channels, groups_for(out_channels), eps)
        else:
            self.shortcut = None

    def forward(self, x: Tensor) -> Tensor:
        out = ops.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        skip = x if self.shortcut is None else self.shortcut_norm(self.shortcut(x))
        return ops.relu(ops.add(out, skip))


class BranchNet(Module):
    """Residual CNN shared by every neighborhood branch, ending in global average pooling."""

    def __init__(self, in_channels: int, channels: Sequence[int], blocks: Sequence[int], strides: Sequence[int],
                 groups_for: Callable[[int], int], rng: np.random.Generator, eps: float = 1e-5,
                 zero_init_residual: bool = False):
        super().__init__()
        self.stages = ModuleList()
        current = in_channels
        for stage_channels, num_blocks, stride in zip(channels, blocks, strides):
            stage = ModuleList()
            for index in range(num_blocks):
                stage.append(BasicBlock(current, stage_channels, stride if index == 0 else 1, groups_for, rng, eps))
                current = stage_channels
            self.stages.append(stage)
        self.embedding_dim = current
        if zero_init_residual:
            for stage in self.stages:
                for block in stage:
                    block.norm2.gain.data[...] = 0.0

    def forward(self, x: Tensor) -> Tensor:
        """(M, C, h, w) -> (M, E) embeddings."""
        for stage in self.stages:
            for block in stage:
                x = block(x)
        return ops.mean_pool(x)
