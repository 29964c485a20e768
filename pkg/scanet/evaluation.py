"""
Ranking and threshold metrics, fold aggregation and report rendering.
"""

from dataclasses import dataclass, field
import json
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, UndefinedMetricError
from .serialize import make_json_compatible

_logger = logging.getLogger(__name__)

METRIC_NAMES = ("roc_auc", "accuracy", "precision", "sensitivity", "specificity")
METRIC_TITLES = {
    "roc_auc": "ROC-AUC",
    "accuracy": "Accuracy",
    "precision": "Precision",
    "sensitivity": "Sensitivity",
    "specificity": "Specificity",
}


def _scores_and_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ArgumentError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ArgumentError("labels must be 0 or 1")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"ROC-AUC needs both classes, got {n_pos} positives and {n_neg} negatives")
    return scores, labels.astype(int), n_pos, n_neg


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC from average ranks; tied scores count one half."""
    scores, labels, n_pos, n_neg = _scores_and_labels(scores, labels)
    ranks = rankdata(scores)
    u = float(ranks[labels == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def pairwise_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """O(n^2) counting reference for ``roc_auc``."""
    scores, labels, n_pos, n_neg = _scores_and_labels(scores, labels)
    positives, negatives = scores[labels == 1], scores[labels == 0]
    u = 0.0
    for p in positives:
        for q in negatives:
            if p > q:
                u += 1.0
            elif p == q:
                u += 0.5
    return u / (n_pos * n_neg)


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


@dataclass
class FoldMetrics:
    """Metrics of one held-out fold. ``None`` marks an undefined metric."""
    roc_auc: Optional[float]
    accuracy: float
    precision: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)

    def value(self, name: str) -> Optional[float]:
        return getattr(self, name)


def _positive_probabilities(probabilities) -> np.ndarray:
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.ndim == 2:
        if probabilities.shape[1] != 2:
            raise ArgumentError(f"expected (N, 2) class probabilities, got {probabilities.shape}")
        return probabilities[:, 1]
    return probabilities.reshape(-1)


def confusion_metrics(probabilities, labels: Sequence[int], threshold: float = 0.5) -> FoldMetrics:
    """Threshold metrics with class 1 (favorable) as positive; predict 1 iff p1 > threshold.

    ``roc_auc`` of the result is left as None; ``evaluate_fold`` fills it in.
    """
    p1 = _positive_probabilities(probabilities)
    labels = np.asarray(labels).reshape(-1)
    if p1.size == 0:
        raise ArgumentError("confusion_metrics needs at least one prediction")
    if p1.shape != labels.shape:
        raise ArgumentError(f"{p1.size} predictions but {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ArgumentError("labels must be 0 or 1")
    predicted = p1 > threshold
    actual = labels == 1
    counts = ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )
    return FoldMetrics(
        roc_auc=None,
        accuracy=(counts.tp + counts.tn) / counts.total,
        precision=_ratio(counts.tp, counts.tp + counts.fp),
        sensitivity=_ratio(counts.tp, counts.tp + counts.fn),
        specificity=_ratio(counts.tn, counts.tn + counts.fp),
        counts=counts,
    )


def evaluate_fold(probabilities, labels: Sequence[int], threshold: float = 0.5) -> FoldMetrics:
    metrics = confusion_metrics(probabilities, labels, threshold)
    try:
        metrics.roc_auc = roc_auc(_positive_probabilities(probabilities), labels)
    except UndefinedMetricError as e:
        _logger.warning(f"ROC-AUC undefined for this fold: {e}")
    undefined = [name for name in METRIC_NAMES if metrics.value(name) is None]
    if undefined:
        _logger.warning(f"Undefined metrics on a fold of {metrics.counts.total}: {', '.join(undefined)}")
    return metrics


@dataclass
class MetricSummary:
    mean: Optional[float]
    std: Optional[float]
    count: int

    def format(self) -> str:
        if self.mean is None:
            return "undefined"
        std = "n/a" if self.std is None else f"{self.std:.4f}"
        return f"{self.mean:.4f} ± {std}"


def summarize(values: Sequence[Optional[float]]) -> MetricSummary:
    """Mean and sample (n-1) std over the defined values."""
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size == 0:
        return MetricSummary(mean=None, std=None, count=0)
    std = float(np.std(defined, ddof=1)) if defined.size >= 2 else None
    return MetricSummary(mean=float(np.mean(defined)), std=std, count=int(defined.size))


@dataclass
class EvalReport:
    folds: List[FoldMetrics]
    summary: Dict[str, MetricSummary]
    model: str = "SCANet"

    def to_dict(self) -> Dict:
        return make_json_compatible({
            "model": self.model,
            "dispersion": "sample std",
            "folds": self.folds,
            "summary": self.summary,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Dict) -> "EvalReport":
        folds = []
        for fold in data["folds"]:
            fold = dict(fold)
            counts = ConfusionCounts(**fold.pop("counts"))
            folds.append(FoldMetrics(counts=counts, **fold))
        summary = {name: MetricSummary(**values) for name, values in data["summary"].items()}
        return cls(folds=folds, summary=summary, model=data.get("model", "SCANet"))

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def format_table(self) -> str:
        return format_reports([self])


def aggregate_report(fold_metrics: Sequence[FoldMetrics], model: str = "SCANet") -> EvalReport:
    if not fold_metrics:
        raise ArgumentError("aggregate_report needs at least one fold")
    if len(fold_metrics) < 2:
        _logger.warning("Only one fold: reporting the mean without a standard deviation")
    summary = {name: summarize([fold.value(name) for fold in fold_metrics]) for name in METRIC_NAMES}
    return EvalReport(folds=list(fold_metrics), summary=summary, model=model)


def _cell(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def format_reports(reports: Sequence[EvalReport]) -> str:
    """Text table: one row per fold and a mean ± sample std row per report."""
    header = ["Model", "Fold"] + [METRIC_TITLES[name] for name in METRIC_NAMES]
    rows = []
    for report in reports:
        for index, fold in enumerate(report.folds, start=1):
            rows.append([report.model, str(index)] + [_cell(fold.value(name)) for name in METRIC_NAMES])
        rows.append([report.model, "mean ± std"] + [report.summary[name].format() for name in METRIC_NAMES])
    widths = [max(len(row[col]) for row in [header] + rows) for col in range(len(header))]

    def render(row):
        return "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()

    lines = [render(header), render(["-" * width for width in widths])]
    lines.extend(render(row) for row in rows)
    lines.append("(dispersion: sample standard deviation across folds)")
    return "\n".join(lines)


def compare_reports(scanet: EvalReport, baseline: EvalReport) -> str:
    return format_reports([scanet, baseline])
