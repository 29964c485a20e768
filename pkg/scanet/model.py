"""
SCANet and the plain residual baseline.

Pipeline for a batch of studies (N, S, C, H, W):
    global conv block per slice -> spatial attention per slice ->
    neighborhood partition -> shared residual branch per slice ->
    cross attention per neighborhood -> per-branch head -> weighted softmax.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from . import ops
from .base import Parameter, Tensor
from .config import ModelConfig, config_to_text, parse_config_text, apply_overrides, TrainConfig
from .data.study import PatientStudy, study_to_array
from .errors import ConfigError, DimensionError, VerificationError
from .nn import (
    BranchNet, Conv2d, CrossAttentionTransformer, Dropout, GroupNorm, Linear, Module, ModuleList,
    SpatialAttentionTransformer,
)
from .serialize import load_checkpoint, save_checkpoint
from .settings import Settings, no_grad
from .simple_registry import MODEL_REGISTRY, register_model

_logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-5


def neighborhood_partition(num_slices: int, k: int) -> List[List[int]]:
    """Contiguous groups of ``k`` slice indices; the last group repeats its final slice to fill up.

    >>> neighborhood_partition(5, 2)
    [[0, 1], [2, 3], [4, 4]]
    """
    if k < 1:
        raise ConfigError(f"neighborhood size must be >= 1, got {k}")
    if k > num_slices:
        raise ConfigError(f"neighborhood size {k} exceeds the number of slices {num_slices}")
    groups = []
    for start in range(0, num_slices, k):
        group = list(range(start, min(start + k, num_slices)))
        group += [group[-1]] * (k - len(group))
        groups.append(group)
    return groups


def partition_slices(slices: Tensor, k: int, axis: int = 1) -> Tensor:
    """Gather slices along ``axis`` into neighborhood order: extent S becomes B*K."""
    groups = neighborhood_partition(slices.shape[axis], k)
    return ops.take(slices, [index for group in groups for index in group], axis=axis)


def aggregate(branch_logits: Tensor, branch_weights: Tensor) -> Tensor:
    """Fuse (..., B, 2) branch logits with softmax-normalized (B,) weights, then class softmax."""
    if branch_logits.ndim < 2 or branch_logits.shape[-2] != branch_weights.shape[0]:
        raise DimensionError(f"aggregate: logits {branch_logits.shape} do not match weights {branch_weights.shape}")
    omega = ops.softmax(branch_weights, axis=0)
    weighted = ops.mul(branch_logits, ops.reshape(omega, (branch_weights.shape[0], 1)))
    fused = ops.sum(weighted, axis=-2)
    return ops.softmax(fused, axis=-1)


def predict_label(probabilities) -> Union[int, np.ndarray]:
    """Class 1 only when p1 strictly exceeds p0; ties go to class 0."""
    probabilities = np.asarray(probabilities.data if isinstance(probabilities, Tensor) else probabilities)
    labels = (probabilities[..., 1] > probabilities[..., 0]).astype(int)
    return int(labels) if labels.ndim == 0 else labels


@dataclass
class AttentionRecord:
    """Attention maps of one study.

    sat_maps: (S, L, H, T, T) row-stochastic spatial maps per slice, layer and head.
    cat_maps: (B, K) slice-importance vector per neighborhood.
    """
    sat_maps: np.ndarray = field(default_factory=lambda: np.zeros((0,)))
    cat_maps: np.ndarray = field(default_factory=lambda: np.zeros((0,)))
    groups: List[List[int]] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return self.sat_maps.size == 0 and self.cat_maps.size == 0

    def max_row_error(self) -> float:
        errors = [0.0]
        for maps in (self.sat_maps, self.cat_maps):
            if maps.size:
                errors.append(float(np.max(np.abs(maps.sum(axis=-1) - 1.0))))
        return max(errors)

    def validate(self, tolerance: float = ROW_SUM_TOLERANCE) -> "AttentionRecord":
        for name, maps in (("sat", self.sat_maps), ("cat", self.cat_maps)):
            if maps.size and np.any(maps < 0):
                raise VerificationError(f"{name} attention has negative entries")
        error = self.max_row_error()
        if error > tolerance:
            raise VerificationError(f"attention rows deviate from 1 by {error:.2e} (tolerance {tolerance:.0e})")
        return self

    def spatial_saliency(self, grid: Tuple[int, int]) -> np.ndarray:
        """(S, h, w) mean attention each token receives in the last layer, averaged over heads."""
        if self.sat_maps.size == 0:
            raise VerificationError("attention record holds no spatial maps")
        last = self.sat_maps[:, -1]
        received = last.mean(axis=1).mean(axis=1)
        return received.reshape((last.shape[0],) + tuple(grid))


class GlobalConvBlock(Module):
    """Slice-wise 2D conv stack (conv, group norm, relu); weights shared across slices."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.layers = ModuleList()
        in_channels = config.modality_channels
        for channels, kernel, stride in zip(config.global_conv_channels, config.global_conv_kernels,
                                            config.global_conv_strides):
            self.layers.append(Conv2d(in_channels, channels, kernel, rng, stride=stride))
            self.layers.append(GroupNorm(channels, config.groups_for(channels), config.norm_eps))
            in_channels = channels
        self.out_channels = in_channels
        self.grid = tuple(config.token_grid)

    def forward(self, slices: Tensor) -> Tensor:
        """(M, C, H, W) slices to (M, C1, h, w) feature maps."""
        for index in range(0, len(self.layers), 2):
            slices = ops.relu(self.layers[index + 1](self.layers[index](slices)))
        if tuple(slices.shape[2:]) != self.grid:
            raise ConfigError(f"global conv produced a {slices.shape[2]}x{slices.shape[3]} grid, "
                              f"token_grid is {self.grid[0]}x{self.grid[1]}")
        return slices


class StudyModel(Module):
    """Shared plumbing of the registered model variants."""

    variant: str = ""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config.validate()

    def _check_volumes(self, volumes) -> Tensor:
        volumes = volumes if isinstance(volumes, Tensor) else Tensor(volumes)
        expected = self.config.volume_shape
        if volumes.ndim == 4:
            volumes = ops.reshape(volumes, (1,) + tuple(volumes.shape))
        if volumes.ndim != 5 or tuple(volumes.shape[1:]) != expected:
            raise ConfigError(f"{self.variant} expects volumes of shape (N, {', '.join(map(str, expected))}), "
                              f"got {volumes.shape}")
        return volumes

    def global_conv_block(self, study_tensor) -> Tensor:
        """(S, C, H, W) one study -> (S, C1, h, w)."""
        study_tensor = study_tensor if isinstance(study_tensor, Tensor) else Tensor(study_tensor)
        expected = self.config.volume_shape[1:]
        if study_tensor.ndim != 4 or tuple(study_tensor.shape[1:]) != expected:
            raise ConfigError(f"global conv block expects (S, {', '.join(map(str, expected))}), "
                              f"got {study_tensor.shape}")
        return self.global_conv(study_tensor)


@register_model("scanet")
class SCANet(StudyModel):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config)
        c = self.config
        self.global_conv = GlobalConvBlock(c, rng)
        self.sat = SpatialAttentionTransformer(
            self.global_conv.out_channels, c.token_grid, c.sat_embed_dim, c.sat_num_heads,
            c.sat_num_layers, c.sat_mlp_ratio, rng, c.dropout, c.norm_eps,
        )
        self.branch = BranchNet(c.sat_embed_dim, c.branch_channels, c.branch_blocks, c.branch_strides,
                                c.groups_for, rng, c.norm_eps)
        self.cat = CrossAttentionTransformer(self.branch.embedding_dim, c.num_branches, c.cat_mlp_ratio,
                                             rng, c.dropout, c.norm_eps)
        self.head_dropout = Dropout(c.dropout, rng)
        self.head = Linear(self.branch.embedding_dim, c.num_classes, rng)
        self.branch_weights = Parameter(np.zeros(c.num_branches, dtype=Settings.dtype))

    def sat_forward(self, slice_features: Tensor) -> Tuple[Tensor, List[np.ndarray]]:
        return self.sat(slice_features)

    def branch_forward(self, tokens: Tensor) -> Tensor:
        """(M, T, D) slice tokens -> (M, E) slice embeddings through the shared branch."""
        return self.branch(self.sat.tokens_to_grid(tokens))

    def cat_forward(self, branch_slices: Tensor) -> Tuple[Tensor, np.ndarray]:
        return self.cat(branch_slices)

    def forward(self, volumes) -> Tuple[Tensor, List[AttentionRecord]]:
        """Class probabilities (N, 2) and one AttentionRecord per study."""
        volumes = self._check_volumes(volumes)
        c = self.config
        n, s = volumes.shape[:2]
        k, b = c.neighborhood_size, c.num_branches
        slices = ops.reshape(volumes, (n * s,) + c.volume_shape[1:])
        features = self.global_conv(slices)
        tokens, sat_maps = self.sat_forward(features)
        tokens = ops.reshape(tokens, (n, s) + tuple(tokens.shape[1:]))
        grouped = partition_slices(tokens, k, axis=1)
        grouped = ops.reshape(grouped, (n * b * k,) + tuple(grouped.shape[2:]))
        embeddings = self.branch_forward(grouped)
        embeddings = ops.reshape(embeddings, (n, b, k, self.branch.embedding_dim))
        fused, cat_maps = self.cat_forward(embeddings)
        logits = self.head(self.head_dropout(fused))
        probabilities = aggregate(logits, self.branch_weights)

        groups = neighborhood_partition(s, k)
        stacked = np.stack(sat_maps, axis=1)
        stacked = stacked.reshape((n, s) + stacked.shape[1:])
        records = [AttentionRecord(sat_maps=stacked[i], cat_maps=cat_maps[i], groups=groups) for i in range(n)]
        return probabilities, records


@register_model("resnet")
class ResNetBaseline(StudyModel):
    """The shared residual branch over every slice with mean fusion; no attention modules."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config)
        c = self.config
        self.global_conv = GlobalConvBlock(c, rng)
        self.branch = BranchNet(self.global_conv.out_channels, c.branch_channels, c.branch_blocks,
                                c.branch_strides, c.groups_for, rng, c.norm_eps)
        self.head_dropout = Dropout(c.dropout, rng)
        self.head = Linear(self.branch.embedding_dim, c.num_classes, rng)

    def forward(self, volumes) -> Tuple[Tensor, List[AttentionRecord]]:
        volumes = self._check_volumes(volumes)
        n, s = volumes.shape[:2]
        slices = ops.reshape(volumes, (n * s,) + self.config.volume_shape[1:])
        embeddings = self.branch(self.global_conv(slices))
        pooled = ops.mean(ops.reshape(embeddings, (n, s, self.branch.embedding_dim)), axis=1)
        probabilities = ops.softmax(self.head(self.head_dropout(pooled)), axis=-1)
        return probabilities, [AttentionRecord() for _ in range(n)]


def build_model(config: ModelConfig, seed: int = 0) -> StudyModel:
    """Instantiate the registered variant; parameters depend only on (config, seed)."""
    config.validate()
    if config.variant not in MODEL_REGISTRY:
        raise ConfigError(f"unknown model variant '{config.variant}', choose from {sorted(MODEL_REGISTRY)}")
    model = MODEL_REGISTRY[config.variant](config, np.random.default_rng(seed))
    _logger.debug(f"Built {config.variant} with {model.num_parameters()} parameters (seed {seed})")
    return model


def predict_study(model: StudyModel, study: Union[PatientStudy, np.ndarray]) -> Tuple[np.ndarray, AttentionRecord]:
    """Evaluation-mode forward of one study without recording a graph."""
    volume = study_to_array(study) if isinstance(study, PatientStudy) else np.asarray(study)
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            probabilities, records = model(volume[None])
    finally:
        model.train(was_training)
    return probabilities.data[0], records[0]


def predict_proba(model: StudyModel, volumes: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """(N, 2) evaluation-mode probabilities for stacked volumes."""
    was_training = model.training
    model.eval()
    outputs = []
    try:
        with no_grad():
            for start in range(0, len(volumes), batch_size):
                probabilities, _ = model(volumes[start:start + batch_size])
                outputs.append(probabilities.data)
    finally:
        model.train(was_training)
    if not outputs:
        return np.zeros((0, 2), dtype=Settings.dtype)
    return np.concatenate(outputs, axis=0)


def card_path_for(checkpoint: Union[str, Path]) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.stem + ".card.txt")


def save_model(model: StudyModel, path: Union[str, Path], train_config: Optional[TrainConfig] = None) -> Path:
    """Write the checkpoint and its model card; returns the card path."""
    path = Path(path)
    save_checkpoint(path, model.named_parameters())
    card = card_path_for(path)
    header = (f"# {model.variant} model card\n"
              f"# parameters: {model.num_parameters()}\n"
              f"# checkpoint: {path.name}\n")
    card.write_text(header + config_to_text(model.config, train_config))
    _logger.info(f"Saved checkpoint {path} and model card {card}")
    return card


def load_model(path: Union[str, Path]) -> StudyModel:
    """Rebuild a model from its card and restore the checkpointed parameters."""
    path = Path(path)
    card = card_path_for(path)
    try:
        values = parse_config_text(card.read_text(), source=str(card))
    except OSError as e:
        raise ConfigError(f"cannot read model card {card}: {e}") from e
    model_config, _ = apply_overrides(ModelConfig(), TrainConfig(), values)
    model = build_model(model_config)
    model.load_state_dict(load_checkpoint(path))
    return model
