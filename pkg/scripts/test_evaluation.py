"""
Metrics, fold aggregation and report rendering.
"""

import numpy as np
import pytest

from scanet.errors import ArgumentError, UndefinedMetricError
from scanet.evaluation import (
    EvalReport, MetricSummary, aggregate_report, compare_reports, confusion_metrics, evaluate_fold, pairwise_auc,
    roc_auc, summarize,
)


@pytest.mark.parametrize("scores,labels,expected", [
    ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75),
    ([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1], 1.0),
    ([0.4, 0.3, 0.2, 0.1], [0, 0, 1, 1], 0.0),
    ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
    ([0.2, 0.5, 0.5, 0.9], [0, 0, 1, 1], 0.875),
])
def test_roc_auc_examples(scores, labels, expected):
    assert roc_auc(scores, labels) == pytest.approx(expected)
    assert pairwise_auc(scores, labels) == pytest.approx(expected)


def test_fast_auc_matches_pairwise_oracle_on_random_instances_with_ties():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 6, size=n) / 5.0
        assert roc_auc(scores, labels) == pairwise_auc(scores, labels)


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ArgumentError):
        roc_auc([0.1, 0.2, 0.3], [0, 1])


def test_confusion_metrics_at_threshold_half():
    probabilities = np.array([[0.2, 0.8], [0.6, 0.4], [0.5, 0.5], [0.3, 0.7], [0.9, 0.1]])
    labels = [1, 1, 0, 0, 0]
    metrics = confusion_metrics(probabilities, labels)
    counts = metrics.counts
    assert (counts.tp, counts.fp, counts.tn, counts.fn) == (1, 1, 2, 1)
    assert metrics.accuracy == pytest.approx(3 / 5)
    assert metrics.precision == pytest.approx(1 / 2)
    assert metrics.sensitivity == pytest.approx(1 / 2)
    assert metrics.specificity == pytest.approx(2 / 3)


def test_undefined_ratios_are_none_not_nan():
    metrics = evaluate_fold(np.array([0.1, 0.2, 0.3]), [0, 0, 0])
    assert metrics.roc_auc is None
    assert metrics.precision is None and metrics.sensitivity is None
    assert metrics.specificity == 1.0 and metrics.accuracy == 1.0


def test_summarize_uses_sample_std():
    summary = summarize([0.7, 0.8, None])
    assert summary.count == 2
    assert summary.mean == pytest.approx(0.75)
    assert summary.std == pytest.approx(np.std([0.7, 0.8], ddof=1))
    assert summary.format() == "0.7500 ± 0.0707"
    assert summarize([0.5]).format() == "0.5000 ± n/a"
    assert summarize([None]).format() == "undefined"


def _report(model="SCANet", shift=0.0):
    rng = np.random.default_rng(7)
    folds = []
    for _ in range(5):
        labels = np.array([0, 1] * 6)
        scores = np.clip(labels * 0.4 + rng.uniform(0.0, 0.6, size=12) + shift, 0.0, 1.0)
        folds.append(evaluate_fold(scores, labels))
    return aggregate_report(folds, model=model)


def test_report_table_has_fold_rows_and_mean_row():
    report = _report()
    table = report.format_table()
    lines = table.splitlines()
    assert lines[0].split() == ["Model", "Fold", "ROC-AUC", "Accuracy", "Precision", "Sensitivity", "Specificity"]
    assert sum(1 for line in lines if line.startswith("SCANet")) == 6
    assert "mean ± std" in table and "sample standard deviation" in table
    assert report.summary["roc_auc"].format() in table


def test_report_json_round_trip_matches_table():
    report = _report()
    restored = EvalReport.from_json(report.to_json())
    assert restored.model == "SCANet"
    assert restored.format_table() == report.format_table()
    for name, summary in report.summary.items():
        assert restored.summary[name] == summary


def test_compare_reports_lists_both_models():
    table = compare_reports(_report(), _report("ResNet", shift=0.1))
    assert "SCANet" in table and "ResNet" in table
    assert table.count("mean ± std") == 2


def test_aggregate_requires_folds():
    with pytest.raises(ArgumentError):
        aggregate_report([])
    assert isinstance(summarize([]), MetricSummary)
