"""
Self- and cross-attention blocks.

Spatial attention runs per slice over the flattened feature grid. Cross
attention uses one learned query per neighborhood branch to weight the slices
of that branch.
"""

import math
from typing import List, Tuple

import numpy as np

from .. import ops
from ..base import Parameter, Tensor
from ..errors import ConfigError, DimensionError
from ..settings import Settings
from .layers import Conv2d, LayerNorm, Linear, Mlp
from .module import Module, ModuleList


class MultiHeadSelfAttention(Module):
    def __init__(self, embed_dim: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        if embed_dim % num_heads != 0:
            raise ConfigError(f"embed_dim {embed_dim} is not divisible by num_heads {num_heads}")
        self.embed_dim, self.num_heads = embed_dim, num_heads
        self.query = Linear(embed_dim, embed_dim, rng)
        self.key = Linear(embed_dim, embed_dim, rng)
        self.value = Linear(embed_dim, embed_dim, rng)
        self.output = Linear(embed_dim, embed_dim, rng)

    def _split_heads(self, x: Tensor) -> Tensor:
        n, t, _ = x.shape
        head_dim = self.embed_dim // self.num_heads
        return ops.transpose(ops.reshape(x, (n, t, self.num_heads, head_dim)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tuple[Tensor, np.ndarray]:
        """Attend over tokens of ``x`` (N, T, D); returns the output and (N, H, T, T) maps."""
        if x.ndim != 3 or x.shape[-1] != self.embed_dim:
            raise DimensionError(f"self-attention expects (N, T, {self.embed_dim}) tokens, got {x.shape}")
        n, t, d = x.shape
        q = self._split_heads(self.query(x))
        k = self._split_heads(self.key(x))
        v = self._split_heads(self.value(x))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d // self.num_heads))
        attention = ops.softmax(scores, axis=-1)
        context = ops.matmul(attention, v)
        context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (n, t, d))
        return self.output(context), attention.data


class TransformerEncoderLayer(Module):
    """Pre-norm encoder layer: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, embed_dim: int, num_heads: int, mlp_ratio: int, rng: np.random.Generator,
                 dropout: float = 0.0, eps: float = 1e-5):
        super().__init__()
        self.norm1 = LayerNorm(embed_dim, eps)
        self.attention = MultiHeadSelfAttention(embed_dim, num_heads, rng)
        self.norm2 = LayerNorm(embed_dim, eps)
        self.mlp = Mlp(embed_dim, mlp_ratio * embed_dim, rng, dropout)

    def forward(self, x: Tensor) -> Tuple[Tensor, np.ndarray]:
        attended, maps = self.attention(self.norm1(x))
        x = ops.add(x, attended)
        x = ops.add(x, self.mlp(self.norm2(x)))
        return x, maps


class SpatialAttentionTransformer(Module):
    """Per-slice tokens from a 1x1 projection of the feature grid, plus learned positions."""

    def __init__(self, in_channels: int, grid: Tuple[int, int], embed_dim: int, num_heads: int,
                 num_layers: int, mlp_ratio: int, rng: np.random.Generator,
                 dropout: float = 0.0, eps: float = 1e-5):
        super().__init__()
        if embed_dim % num_heads != 0:
            raise ConfigError(f"sat_embed_dim {embed_dim} is not divisible by sat_num_heads {num_heads}")
        self.grid = tuple(grid)
        self.embed_dim = embed_dim
        self.projection = Conv2d(in_channels, embed_dim, 1, rng)
        num_tokens = self.grid[0] * self.grid[1]
        self.position = Parameter((0.02 * rng.standard_normal((num_tokens, embed_dim))).astype(Settings.dtype))
        self.layers = ModuleList(
            TransformerEncoderLayer(embed_dim, num_heads, mlp_ratio, rng, dropout, eps) for _ in range(num_layers)
        )

    def forward(self, features: Tensor) -> Tuple[Tensor, List[np.ndarray]]:
        """Map (M, C1, h, w) slice features to (M, T, D) tokens and per-layer (M, H, T, T) maps."""
        if features.ndim != 4 or tuple(features.shape[2:]) != self.grid:
            raise DimensionError(
                f"spatial attention expects (M, C, {self.grid[0]}, {self.grid[1]}) features, got {features.shape}"
            )
        projected = self.projection(features)
        tokens = ops.transpose(ops.flatten(projected, start_axis=2), (0, 2, 1))
        tokens = ops.add(tokens, self.position)
        maps = []
        for layer in self.layers:
            tokens, layer_maps = layer(tokens)
            maps.append(layer_maps)
        return tokens, maps

    def tokens_to_grid(self, tokens: Tensor) -> Tensor:
        """(M, T, D) tokens back to a (M, D, h, w) feature grid."""
        m = tokens.shape[0]
        return ops.reshape(ops.transpose(tokens, (0, 2, 1)), (m, self.embed_dim) + self.grid)


class CrossAttentionTransformer(Module):
    """One learned query per branch attends over that branch's slice embeddings.

    Input is (..., B, K, E); output is (..., B, E) with the (..., B, K) slice
    weights alpha. The output adds a residual MLP to the attended context.
    """

    def __init__(self, embed_dim: int, num_queries: int, mlp_ratio: int, rng: np.random.Generator,
                 dropout: float = 0.0, eps: float = 1e-5):
        super().__init__()
        self.embed_dim, self.num_queries = embed_dim, num_queries
        self.query = Parameter((0.02 * rng.standard_normal((num_queries, embed_dim))).astype(Settings.dtype))
        self.key = Linear(embed_dim, embed_dim, rng)
        self.value = Linear(embed_dim, embed_dim, rng)
        self.norm = LayerNorm(embed_dim, eps)
        self.mlp = Mlp(embed_dim, mlp_ratio * embed_dim, rng, dropout)

    def forward(self, slices: Tensor) -> Tuple[Tensor, np.ndarray]:
        if slices.ndim < 3 or slices.shape[-1] != self.embed_dim or slices.shape[-3] != self.num_queries:
            raise DimensionError(
                f"cross attention expects (..., {self.num_queries}, K, {self.embed_dim}) embeddings, "
                f"got {slices.shape}"
            )
        keys = self.key(slices)
        values = self.value(slices)
        query = ops.reshape(self.query, (self.num_queries, 1, self.embed_dim))
        scores = ops.matmul(query, ops.transpose(keys, tuple(range(keys.ndim - 2)) + (keys.ndim - 1, keys.ndim - 2)))
        alpha = ops.softmax(ops.scale(scores, 1.0 / math.sqrt(self.embed_dim)), axis=-1)
        context = ops.matmul(alpha, values)
        context = ops.reshape(context, context.shape[:-2] + (self.embed_dim,))
        out = ops.add(context, self.mlp(self.norm(context)))
        return out, alpha.data.reshape(alpha.shape[:-2] + (alpha.shape[-1],))
