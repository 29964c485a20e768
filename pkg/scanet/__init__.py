# SCANet - slice and spatial attention classifier for stroke-outcome studies

# Settings
from .settings import Settings, update_settings, no_grad, precision

# Autodiff core
from .base import Function, Parameter, Tensor, as_tensor, backward
from . import ops

# Simple registry system
from .simple_registry import MODEL_REGISTRY, OP_REGISTRY, register_model, register_op

from .errors import (
    ArgumentError, ConfigError, ContractError, DimensionError, FormatError, NumericError, ScanetError,
    StratificationError, UndefinedMetricError, VerificationError,
)
from .config import ModelConfig, TrainConfig, RunConfig, PRESETS, expand_preset, build_run_config
from .optim import AdamW, adamw_step
from .model import (
    SCANet, ResNetBaseline, AttentionRecord, aggregate, build_model, load_model, neighborhood_partition,
    predict_label, predict_proba, predict_study, save_model,
)
from .gradcheck import format_gradcheck_table, grad_check, inject_fault, run_gradcheck_suite
from .training import EarlyStopping, TrainHistory, cross_validate, run_cross_validation, train
from .evaluation import EvalReport, FoldMetrics, aggregate_report, confusion_metrics, evaluate_fold, roc_auc
from .attention_export import export_attention

# Model inspection utilities
from .inspect_model import inspect_model, list_models, list_ops, search_ops

from . import data


__version__ = "0.1.0"
__all__ = [
    # Settings
    "Settings", "update_settings", "no_grad", "precision",
    # Core
    "Function", "Parameter", "Tensor", "as_tensor", "backward", "ops",
    # Simple Registry
    "MODEL_REGISTRY", "OP_REGISTRY", "register_model", "register_op",
    # Errors
    "ArgumentError", "ConfigError", "ContractError", "DimensionError", "FormatError", "NumericError",
    "ScanetError", "StratificationError", "UndefinedMetricError", "VerificationError",
    # Configuration
    "ModelConfig", "TrainConfig", "RunConfig", "PRESETS", "expand_preset", "build_run_config",
    # Model and training
    "AdamW", "adamw_step", "SCANet", "ResNetBaseline", "AttentionRecord", "aggregate", "build_model",
    "load_model", "neighborhood_partition", "predict_label", "predict_proba", "predict_study", "save_model",
    "format_gradcheck_table", "grad_check", "inject_fault", "run_gradcheck_suite",
    "EarlyStopping", "TrainHistory", "cross_validate", "run_cross_validation", "train",
    "EvalReport", "FoldMetrics", "aggregate_report", "confusion_metrics", "evaluate_fold", "roc_auc",
    "export_attention",
    # Model inspection
    "inspect_model", "list_models", "list_ops", "search_ops",
    "data",
]
