"""
Training loop, early stopping and the cross-validation driver.
"""

from dataclasses import replace

import numpy as np
import pytest

from scanet import ops, training
from scanet.config import expand_preset
from scanet.data import make_synthetic_studies, permute_labels, stack_studies, SyntheticParams
from scanet.errors import ArgumentError
from scanet.evaluation import roc_auc
from scanet.model import build_model, predict_proba
from scanet.settings import Settings, precision
from scanet.training import (
    EarlyStopping, TrainHistory, cross_validate, run_cross_validation, train, write_history_csv,
)


@pytest.fixture
def tiny_train():
    _, train_config = expand_preset("tiny")
    return replace(train_config, max_epochs=3)


def test_early_stopping_on_a_stubbed_loss_sequence():
    stopper = EarlyStopping(patience=3, min_delta=0.01)
    decisions = []
    for epoch, loss in enumerate([1.0, 0.9, 0.895, 0.95, 0.97], start=1):
        decisions.append(stopper.update(epoch, loss))
        if stopper.should_stop:
            break
    assert decisions == [True, True, False, False, False]
    assert stopper.best_epoch == 2 and epoch == 5


def test_train_stops_early_and_restores_the_best_parameters(monkeypatch, tiny_config, tiny_train, tiny_studies):
    losses = iter([0.9, 0.5, 0.6, 0.7, 0.8, 0.4])
    snapshots = []

    def fake_evaluate(model, volumes, labels, batch_size):
        snapshots.append(model.state_dict())
        return next(losses), np.full((len(labels), 2), 0.5)

    monkeypatch.setattr(training, "_evaluate_loss", fake_evaluate)
    model = build_model(tiny_config, seed=0)
    config = replace(tiny_train, max_epochs=10, patience=3)
    best_state, history = train(model, tiny_studies, config)
    assert history.epochs == 5 and history.best_epoch == 2
    assert history.stop_reason.startswith("early stopping")
    assert history.val_auc == [0.5] * 5
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, snapshots[1][name], err_msg=name)
        np.testing.assert_array_equal(best_state[name], snapshots[1][name])


def test_train_reports_a_max_epochs_stop(tiny_config, tiny_train, tiny_studies):
    model = build_model(tiny_config, seed=0)
    _, history = train(model, tiny_studies, replace(tiny_train, max_epochs=2, patience=5))
    assert history.epochs == 2 and history.stop_reason == "max_epochs"
    assert all(np.isfinite(history.train_loss))


def test_training_is_deterministic_in_the_seed(tiny_config, tiny_train, tiny_studies, tmp_path):
    traces = []
    for run in range(2):
        model = build_model(tiny_config, seed=4)
        _, history = train(model, tiny_studies, tiny_train)
        write_history_csv(tmp_path / f"history_{run}.csv", history)
        traces.append(history.train_loss)
    assert traces[0] == traces[1]
    assert (tmp_path / "history_0.csv").read_bytes() == (tmp_path / "history_1.csv").read_bytes()


def test_full_batch_gradient_is_the_mean_of_per_study_gradients(tiny_config, tiny_studies):
    volumes, labels = stack_studies(tiny_studies[:4])
    with precision(np.float64):
        model = build_model(tiny_config, seed=1)
        probabilities, _ = model(volumes)
        training.cross_entropy_loss(probabilities, labels).backward()
        full = [param.grad.copy() for param in model.parameters()]
        model.zero_grad()
        for index in range(len(labels)):
            probabilities, _ = model(volumes[index:index + 1])
            training.cross_entropy_loss(probabilities, labels[index:index + 1]).backward()
    for (name, param), expected in zip(model.named_parameters(), full):
        np.testing.assert_allclose(param.grad / len(labels), expected, rtol=1e-6, atol=1e-12, err_msg=name)


def test_train_rejects_degenerate_sets(tiny_config, tiny_train, tiny_studies):
    model = build_model(tiny_config, seed=0)
    with pytest.raises(ArgumentError, match="empty"):
        train(model, [], tiny_train)
    one_class = [study for study in tiny_studies if study.label == 1]
    with pytest.raises(ArgumentError, match="both classes"):
        train(model, one_class, tiny_train)


def test_history_csv_marks_undefined_auc(tmp_path):
    history = TrainHistory()
    history.append(0.7, 0.65, None)
    history.append(0.6, 0.61, 0.75)
    write_history_csv(tmp_path / "h.csv", history)
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "epoch,train_loss,val_loss,val_auc"
    assert rows[1] == "1,0.7,0.65,undefined"
    assert rows[2] == "2,0.6,0.61,0.75"


def test_cross_validation_on_a_tiny_cohort(tiny_config, tiny_train, tiny_studies):
    config = replace(tiny_train, max_epochs=2)
    report, results = run_cross_validation(tiny_studies, 2, tiny_config, config)
    assert len(report.folds) == 2 and report.model == "SCANet"
    test_indices = np.sort(np.concatenate([result.test_indices for result in results]))
    np.testing.assert_array_equal(test_indices, np.arange(len(tiny_studies)))
    assert all(result.probabilities.shape == (4, 2) for result in results)
    baseline = cross_validate(tiny_studies, 2, tiny_config, config, variant="resnet")
    assert baseline.model == "ResNet"


def test_single_thread_mode_never_spawns_workers(monkeypatch, tiny_config, tiny_train, tiny_studies):
    def forbidden(*args, **kwargs):
        raise AssertionError("worker pool used in single-thread mode")

    monkeypatch.setattr(training, "ProcessPoolExecutor", forbidden)
    Settings.single_thread = True
    report = cross_validate(tiny_studies, 2, tiny_config, replace(tiny_train, max_epochs=1), workers=4)
    assert len(report.folds) == 2


def test_cross_validation_argument_errors(tiny_config, tiny_train, tiny_studies):
    with pytest.raises(ArgumentError):
        cross_validate(tiny_studies, 1, tiny_config, tiny_train)
    with pytest.raises(ArgumentError):
        cross_validate(tiny_studies, 2, tiny_config, tiny_train, labels=[0, 1])


def _toy_cohort(n: int, seed: int = 0):
    model_config, train_config = expand_preset("toy")
    params = SyntheticParams(num_slices=model_config.num_slices, height=model_config.slice_height,
                             width=model_config.slice_width)
    return make_synthetic_studies(n, seed, params), model_config, train_config


@pytest.mark.slow
def test_toy_model_overfits_sixteen_studies():
    studies, model_config, train_config = _toy_cohort(16)
    model = build_model(model_config, seed=0)
    train(model, studies, train_config, val_set=studies)
    volumes, labels = stack_studies(studies)
    assert roc_auc(predict_proba(model, volumes)[:, 1], labels) >= 0.99


@pytest.mark.slow
def test_toy_five_epoch_trace_is_bitwise_reproducible():
    studies, model_config, train_config = _toy_cohort(16)
    config = replace(train_config, max_epochs=5, patience=10)
    traces = []
    for _ in range(2):
        _, history = train(build_model(model_config, seed=0), studies, config)
        traces.append([np.float64(value).tobytes() for value in history.train_loss])
    assert traces[0] == traces[1]


@pytest.mark.slow
def test_cross_validated_learning_beats_the_baseline():
    studies, model_config, train_config = _toy_cohort(128)
    Settings.single_thread = True
    scanet = cross_validate(studies, 5, model_config, train_config)
    baseline = cross_validate(studies, 5, model_config, train_config, variant="resnet")
    assert scanet.summary["roc_auc"].mean >= 0.90
    assert scanet.summary["roc_auc"].mean >= baseline.summary["roc_auc"].mean


@pytest.mark.slow
def test_permuted_labels_give_chance_level_auc():
    studies, model_config, train_config = _toy_cohort(128)
    labels = permute_labels([study.label for study in studies], seed=11)
    report = cross_validate(studies, 5, model_config, train_config, labels=labels)
    assert 0.35 <= report.summary["roc_auc"].mean <= 0.65


def test_loss_helper_matches_the_fused_op():
    probabilities = np.array([[0.2, 0.8], [0.7, 0.3]], dtype=np.float32)
    from scanet.base import Tensor
    assert training.cross_entropy_loss(Tensor(probabilities), [1, 0]).item() == \
        ops.cross_entropy(Tensor(probabilities), [1, 0]).item()
