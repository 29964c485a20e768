"""
Model, training and run configuration.

Configs are plain dataclasses. Presets expand to fully concrete configs and a
flat ``key = value`` text format (with ``preset = <name>`` inheritance) is used
both for config files and for the model card written beside checkpoints.
"""

from dataclasses import dataclass, field, fields, replace
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .errors import ConfigError

_logger = logging.getLogger(__name__)

SEED_ENV_VAR = "SCANET_SEED"
MODEL_VARIANTS = ("scanet", "resnet")


def conv_grid(size: int, kernels: Tuple[int, ...], strides: Tuple[int, ...]) -> int:
    """Spatial extent after the global conv block (padding k // 2 per layer)."""
    for kernel, stride in zip(kernels, strides):
        size = (size + 2 * (kernel // 2) - kernel) // stride + 1
    return size


@dataclass
class ModelConfig:
    variant: str = "scanet"
    num_slices: int = 26
    slice_height: int = 224
    slice_width: int = 224
    modality_channels: int = 2
    global_conv_channels: Tuple[int, ...] = (32, 64)
    global_conv_kernels: Tuple[int, ...] = (7, 3)
    global_conv_strides: Tuple[int, ...] = (4, 4)
    token_grid: Tuple[int, ...] = (14, 14)
    sat_embed_dim: int = 64
    sat_num_heads: int = 4
    sat_num_layers: int = 2
    sat_mlp_ratio: int = 2
    neighborhood_size: int = 2
    branch_blocks: Tuple[int, ...] = (3, 4, 6, 3)
    branch_channels: Tuple[int, ...] = (64, 128, 256, 512)
    branch_strides: Tuple[int, ...] = (1, 2, 2, 2)
    cat_mlp_ratio: int = 2
    norm_groups: int = 8
    num_classes: int = 2
    dropout: float = 0.1
    norm_eps: float = 1e-5

    @property
    def num_branches(self) -> int:
        return math.ceil(self.num_slices / self.neighborhood_size)

    @property
    def num_tokens(self) -> int:
        return self.token_grid[0] * self.token_grid[1]

    @property
    def embedding_dim(self) -> int:
        return self.branch_channels[-1]

    @property
    def volume_shape(self) -> Tuple[int, int, int, int]:
        return (self.num_slices, self.modality_channels, self.slice_height, self.slice_width)

    def computed_grid(self) -> Tuple[int, int]:
        return (
            conv_grid(self.slice_height, self.global_conv_kernels, self.global_conv_strides),
            conv_grid(self.slice_width, self.global_conv_kernels, self.global_conv_strides),
        )

    def groups_for(self, channels: int) -> int:
        return min(self.norm_groups, channels)

    def validate(self) -> "ModelConfig":
        if self.variant not in MODEL_VARIANTS:
            raise ConfigError(f"variant must be one of {MODEL_VARIANTS}, got '{self.variant}'")
        if self.num_classes != 2:
            raise ConfigError(f"num_classes must be 2, got {self.num_classes}")
        for name in ("num_slices", "slice_height", "slice_width", "modality_channels",
                     "sat_embed_dim", "sat_num_heads", "sat_num_layers", "sat_mlp_ratio",
                     "cat_mlp_ratio", "norm_groups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.sat_embed_dim % self.sat_num_heads != 0:
            raise ConfigError(
                f"sat_embed_dim {self.sat_embed_dim} is not divisible by sat_num_heads {self.sat_num_heads}"
            )
        if not 1 <= self.neighborhood_size <= self.num_slices:
            raise ConfigError(
                f"neighborhood_size must lie in [1, {self.num_slices}], got {self.neighborhood_size}"
            )
        conv_lists = (self.global_conv_channels, self.global_conv_kernels, self.global_conv_strides)
        if not self.global_conv_channels or len(set(map(len, conv_lists))) != 1:
            raise ConfigError("global_conv_channels, global_conv_kernels and global_conv_strides "
                              "must be non-empty and of equal length")
        branch_lists = (self.branch_blocks, self.branch_channels, self.branch_strides)
        if not self.branch_blocks or len(set(map(len, branch_lists))) != 1:
            raise ConfigError("branch_blocks, branch_channels and branch_strides must be non-empty "
                              "and of equal length")
        if any(value < 1 for value in self.global_conv_strides + self.branch_strides + self.branch_blocks):
            raise ConfigError("strides and block counts must be >= 1")
        if len(self.token_grid) != 2:
            raise ConfigError(f"token_grid must have two entries, got {self.token_grid}")
        if self.computed_grid() != tuple(self.token_grid):
            raise ConfigError(
                f"global conv maps {self.slice_height}x{self.slice_width} to a "
                f"{self.computed_grid()[0]}x{self.computed_grid()[1]} grid, but token_grid is "
                f"{self.token_grid[0]}x{self.token_grid[1]}"
            )
        for channels in self.global_conv_channels + self.branch_channels + (self.sat_embed_dim,):
            if channels % self.groups_for(channels) != 0:
                raise ConfigError(f"{channels} channels cannot be split into {self.norm_groups} norm groups")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self


@dataclass
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 12
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 20
    min_delta: float = 1e-4
    validation_fraction: float = 0.15
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ConfigError(f"validation_fraction must lie in (0, 0.5), got {self.validation_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0 or self.min_delta < 0:
            raise ConfigError("weight_decay and min_delta must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        return self


PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "paper-scale": {
        "model": {},
        "train": {},
    },
    "toy": {
        "model": dict(
            num_slices=8, slice_height=32, slice_width=32,
            global_conv_channels=(16,), global_conv_kernels=(5,), global_conv_strides=(4,),
            token_grid=(8, 8), sat_embed_dim=16, sat_num_heads=2, sat_num_layers=1,
            branch_blocks=(1, 1, 1, 1), branch_channels=(16, 16, 32, 32),
            dropout=0.0,
        ),
        "train": dict(batch_size=8, learning_rate=1e-3),
    },
    "tiny": {
        "model": dict(
            num_slices=4, slice_height=16, slice_width=16,
            global_conv_channels=(8,), global_conv_kernels=(3,), global_conv_strides=(4,),
            token_grid=(4, 4), sat_embed_dim=8, sat_num_heads=2, sat_num_layers=1,
            branch_blocks=(1, 1, 1, 1), branch_channels=(8, 8, 8, 8), branch_strides=(1, 1, 2, 2),
            cat_mlp_ratio=2, norm_groups=4, dropout=0.0,
        ),
        "train": dict(batch_size=4, learning_rate=1e-3, max_epochs=20, patience=5),
    },
}


def expand_preset(name: str) -> Tuple[ModelConfig, TrainConfig]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', choose from {sorted(PRESETS)}")
    preset = PRESETS[name]
    return ModelConfig(**preset["model"]).validate(), TrainConfig(**preset["train"]).validate()


@dataclass
class RunConfig:
    """Everything one CLI invocation needs: configs, paths, seed and execution mode."""
    preset: str = "toy"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: Optional[Path] = None
    out: Path = Path("runs")
    seed: int = 0
    single_thread: bool = False
    workers: int = 1


def _coerce(name: str, current: Any, text: str) -> Any:
    text = text.strip()
    try:
        if isinstance(current, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(current, tuple):
            return tuple(int(part) for part in text.replace("x", ",").split(",") if part.strip())
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"cannot parse value '{text}' for '{name}'") from e


def _known_keys() -> set:
    return {f.name for f in fields(ModelConfig)} | {f.name for f in fields(TrainConfig)} | {"preset"}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Keys must name a ``ModelConfig`` or ``TrainConfig`` field, or ``preset``.
    """
    known = _known_keys()
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {line_number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}: line {line_number}: unknown configuration key '{key}'")
        values[key] = value
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def apply_overrides(model: ModelConfig, train: TrainConfig,
                    values: Dict[str, Any]) -> Tuple[ModelConfig, TrainConfig]:
    """Return copies of the configs with ``values`` applied (strings are parsed)."""
    model_fields = {f.name for f in fields(ModelConfig)}
    train_fields = {f.name for f in fields(TrainConfig)}
    model_updates, train_updates = {}, {}
    for key, value in values.items():
        if key in model_fields:
            target, current = model_updates, getattr(model, key)
        elif key in train_fields:
            target, current = train_updates, getattr(train, key)
        else:
            raise ConfigError(f"unknown configuration key '{key}'")
        target[key] = _coerce(key, current, value) if isinstance(value, str) else value
    return replace(model, **model_updates), replace(train, **train_updates)


def resolve_seed(flag_seed: Optional[int], fallback: int) -> int:
    """Explicit flag, then $SCANET_SEED, then the config value."""
    if flag_seed is not None:
        return flag_seed
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value:
        try:
            return int(env_value)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{env_value}'") from e
    return fallback


def build_run_config(preset: Optional[str] = None, config_path: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, Any]] = None, seed: Optional[int] = None,
                     **run_fields) -> RunConfig:
    """Preset, then config file, then explicit overrides; the result is validated."""
    file_values = load_config_file(config_path) if config_path else {}
    preset = preset or file_values.pop("preset", None) or "toy"
    file_values.pop("preset", None)
    model, train = expand_preset(preset)
    model, train = apply_overrides(model, train, file_values)
    model, train = apply_overrides(model, train, overrides or {})
    train = replace(train, seed=resolve_seed(seed, train.seed))
    model.validate()
    train.validate()
    _logger.debug(f"Resolved run config from preset '{preset}' (seed {train.seed})")
    return RunConfig(preset=preset, model=model, train=train, seed=train.seed, **run_fields)


def config_to_text(model: ModelConfig, train: Optional[TrainConfig] = None) -> str:
    """Render configs in the ``key = value`` format accepted by ``parse_config_text``."""
    lines = []
    for config in (model, train):
        if config is None:
            continue
        for f in fields(config):
            value = getattr(config, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
