"""
Mini-batch training with early stopping, and the cross-validation driver.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import ops
from .base import Tensor
from .config import ModelConfig, TrainConfig
from .data.folds import stratified_kfold, stratified_train_val_split
from .data.study import PatientStudy, stack_studies
from .errors import ArgumentError, UndefinedMetricError
from .evaluation import EvalReport, FoldMetrics, aggregate_report, evaluate_fold, roc_auc
from .model import StudyModel, build_model, predict_proba
from .optim import AdamW
from .settings import Settings, no_grad

_logger = logging.getLogger(__name__)

Dataset = Union[Sequence[PatientStudy], Tuple[np.ndarray, np.ndarray]]


def cross_entropy_loss(probabilities: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean of -log p[label] with p floored at 1e-7."""
    return ops.cross_entropy(probabilities, labels)


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_auc: List[Optional[float]] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def append(self, train_loss: float, val_loss: float, val_auc: Optional[float]):
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_auc.append(val_auc)


def write_history_csv(path: Union[str, Path], history: TrainHistory):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_auc"])
        for epoch in range(history.epochs):
            auc = history.val_auc[epoch]
            writer.writerow([
                epoch + 1,
                repr(history.train_loss[epoch]),
                repr(history.val_loss[epoch]),
                "undefined" if auc is None else repr(auc),
            ])


class EarlyStopping:
    """Tracks the best validation loss; stops after ``patience`` epochs without an improvement > min_delta."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; returns True when it is the new best."""
        if loss < self.best_loss - self.min_delta:
            self.best_loss, self.best_epoch, self.wait = loss, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


def _as_arrays(dataset: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple):
        volumes, labels = dataset
        return np.asarray(volumes, dtype=np.float32), np.asarray(labels, dtype=int)
    return stack_studies(dataset)


def _evaluate_loss(model: StudyModel, volumes: np.ndarray, labels: np.ndarray,
                   batch_size: int) -> Tuple[float, np.ndarray]:
    """Mean validation loss and (N, 2) probabilities in evaluation mode."""
    probabilities = predict_proba(model, volumes, batch_size)
    with no_grad():
        loss = cross_entropy_loss(Tensor(probabilities), labels).item()
    return loss, probabilities


def _safe_auc(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    try:
        return roc_auc(scores, labels)
    except UndefinedMetricError:
        return None


def train(model: StudyModel, train_set: Dataset, config: TrainConfig,
          val_set: Optional[Dataset] = None) -> Tuple[Dict[str, np.ndarray], TrainHistory]:
    """Fit ``model`` with AdamW; returns the best-validation-loss parameters (also loaded into the model)."""
    config.validate()
    if not isinstance(train_set, tuple) and len(train_set) == 0:
        raise ArgumentError("training set is empty")
    volumes, labels = _as_arrays(train_set)
    if labels.size == 0:
        raise ArgumentError("training set is empty")
    if len(set(labels.tolist())) < 2:
        raise ArgumentError("training set must contain both classes")

    if val_set is None:
        train_idx, val_idx = stratified_train_val_split(labels, config.validation_fraction, config.seed)
        val_volumes, val_labels = volumes[val_idx], labels[val_idx]
        volumes, labels = volumes[train_idx], labels[train_idx]
    else:
        val_volumes, val_labels = _as_arrays(val_set)
    if len(val_labels) == 0:
        _logger.warning("Too few studies for a validation split; early stopping monitors the training set")
        val_volumes, val_labels = volumes, labels
    if len(set(val_labels.tolist())) < 2:
        _logger.warning("Validation split does not contain both classes; validation AUC is undefined")

    optimizer = AdamW(model.parameters(), lr=config.learning_rate, betas=(config.beta1, config.beta2),
                      eps=config.adam_eps, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    best_state = model.state_dict()

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            probabilities, _ = model(volumes[batch])
            loss = cross_entropy_loss(probabilities, labels[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        train_loss = total / len(labels)
        val_loss, val_probabilities = _evaluate_loss(model, val_volumes, val_labels, config.batch_size)
        val_auc = _safe_auc(val_probabilities[:, 1], val_labels)
        history.append(train_loss, val_loss, val_auc)
        _logger.debug(f"epoch {epoch}: train_loss={train_loss:.6f} val_loss={val_loss:.6f} val_auc={val_auc}")

        if stopper.update(epoch, val_loss):
            best_state = model.state_dict()
        if stopper.should_stop:
            history.stop_reason = f"early stopping (no improvement for {config.patience} epochs)"
            break
    else:
        history.stop_reason = "max_epochs"

    history.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    _logger.info(f"Training stopped after {history.epochs} epochs ({history.stop_reason}); "
                 f"best epoch {history.best_epoch}")
    return best_state, history


@dataclass
class FoldResult:
    index: int
    metrics: FoldMetrics
    history: TrainHistory
    test_indices: np.ndarray
    probabilities: np.ndarray


def _run_fold(payload) -> FoldResult:
    (index, volumes, labels, train_idx, test_idx, model_config, train_config, single_thread) = payload
    Settings.single_thread = single_thread
    model = build_model(model_config, seed=train_config.seed + index)
    _, history = train(model, (volumes[train_idx], labels[train_idx]), train_config)
    probabilities = predict_proba(model, volumes[test_idx], train_config.batch_size)
    metrics = evaluate_fold(probabilities, labels[test_idx])
    _logger.info(f"Fold {index + 1}: ROC-AUC {metrics.roc_auc}, accuracy {metrics.accuracy:.4f}")
    return FoldResult(index, metrics, history, test_idx, probabilities)


def run_cross_validation(cohort: Dataset, k: int, model_config: ModelConfig, train_config: TrainConfig,
                         variant: Optional[str] = None, workers: int = 1,
                         labels: Optional[Sequence[int]] = None) -> Tuple[EvalReport, List[FoldResult]]:
    """Stratified k-fold training and held-out evaluation.

    ``labels`` overrides the cohort labels (used for the permuted-label control).
    Folds run in worker processes when ``workers > 1`` unless single-thread mode is set.
    """
    volumes, cohort_labels = _as_arrays(cohort)
    if labels is not None:
        cohort_labels = np.asarray(labels, dtype=int)
        if cohort_labels.shape != (len(volumes),):
            raise ArgumentError(f"{len(cohort_labels)} override labels for {len(volumes)} studies")
    if variant is not None:
        model_config = replace(model_config, variant=variant)
    model_config.validate()
    train_config.validate()
    folds = stratified_kfold(cohort_labels, k, train_config.seed)
    payloads = []
    for index, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(cohort_labels)), test_idx)
        payloads.append((index, volumes, cohort_labels, train_idx, test_idx, model_config, train_config,
                         Settings.single_thread))

    _logger.info(f"Cross-validating {model_config.variant} over {k} folds of {len(cohort_labels)} studies")
    if workers > 1 and not Settings.single_thread:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, payloads))
    else:
        results = [_run_fold(payload) for payload in payloads]
    name = "SCANet" if model_config.variant == "scanet" else "ResNet"
    report = aggregate_report([result.metrics for result in results], model=name)
    return report, results


def cross_validate(cohort: Dataset, k: int, model_config: ModelConfig, train_config: TrainConfig,
                   variant: Optional[str] = None, workers: int = 1,
                   labels: Optional[Sequence[int]] = None) -> EvalReport:
    report, _ = run_cross_validation(cohort, k, model_config, train_config, variant, workers, labels)
    return report
