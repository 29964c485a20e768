"""
SCANet Examples: from synthetic studies to attention maps

This file demonstrates how to:
1. Build tensors and inspect the autodiff graph
2. Generate a synthetic cohort and look at its class signal
3. Build the tiny SCANet and inspect its parameters
4. Train it for a few epochs and evaluate it
5. Export spatial and slice attention for one study
6. Run the gradient check on a couple of primitives
"""

from dataclasses import replace
import sys
import tempfile
from pathlib import Path

import numpy as np

# Add parent directory to path for local development
sys.path.insert(0, str(Path(__file__).parent.parent))

import scanet
from scanet import ops
from scanet.base import Parameter


def example_1_autodiff_graph():
    """Example 1: A small graph, its backward pass and its printout."""
    print("🔧 Example 1: Autodiff Graph")
    print("=" * 50)

    x = Parameter(np.array([[1.0, -2.0], [0.5, 3.0]]), name="x")
    w = Parameter(np.array([[0.2], [0.4]]), name="w")
    loss = ops.mean(ops.relu(ops.matmul(x, w)))
    loss.backward()

    print("\n📋 Graph:")
    loss.inspect_graph()
    print(f"\n✅ loss = {loss.item():.4f}")
    print(f"   dloss/dw = {w.grad.ravel()}")
    return loss


def example_2_synthetic_cohort(params):
    """Example 2: Synthetic studies with a territory signal."""
    print("\n🧪 Example 2: Synthetic Cohort")
    print("=" * 50)

    studies = scanet.data.make_synthetic_studies(16, seed=0, params=params)
    labels = [study.label for study in studies]
    oracle = scanet.roc_auc(scanet.data.region_mean_scores(studies, params), labels)
    print(f"Studies: {len(studies)}, shape {studies[0].shape}, labels {labels}")
    print(f"✅ Territory-mean oracle ROC-AUC: {oracle:.4f}")
    return studies


def example_3_build_and_inspect(model_config):
    """Example 3: The tiny model and its parameters."""
    print("\n🏗️  Example 3: Build and Inspect")
    print("=" * 50)

    model = scanet.build_model(model_config, seed=0)
    scanet.inspect_model(model)
    print(f"\nNeighborhoods: {scanet.neighborhood_partition(model_config.num_slices, model_config.neighborhood_size)}")
    return model


def example_4_train_and_evaluate(model, studies, train_config):
    """Example 4: A short training run and a held-in evaluation."""
    print("\n📈 Example 4: Train and Evaluate")
    print("=" * 50)

    _, history = scanet.train(model, studies, replace(train_config, max_epochs=5))
    for epoch, (loss, val_loss) in enumerate(zip(history.train_loss, history.val_loss), start=1):
        print(f"  epoch {epoch}: train {loss:.4f}, val {val_loss:.4f}")
    print(f"  stop: {history.stop_reason}, best epoch {history.best_epoch}")

    volumes, labels = scanet.data.stack_studies(studies)
    probabilities = scanet.predict_proba(model, volumes)
    report = scanet.aggregate_report([scanet.evaluate_fold(probabilities, labels)])
    print()
    print(report.format_table())
    return report


def example_5_attention_export(model, study):
    """Example 5: Attention maps of one study written to a temporary directory."""
    print("\n🔍 Example 5: Attention Export")
    print("=" * 50)

    with tempfile.TemporaryDirectory() as out_dir:
        summary = scanet.export_attention(model, study, out_dir)
        print(f"Probabilities: {summary.probabilities}")
        print(f"Spatial maps: {len(summary.sat_files)}, saliency maps: {summary.num_slice_maps}")
        print(f"Slice importance:\n{Path(summary.cat_file).read_text()}")
        print(f"✅ Max attention row error: {summary.max_row_error:.2e}")
    return summary


def example_6_gradcheck():
    """Example 6: Finite differences against the analytic gradients."""
    print("\n🧮 Example 6: Gradient Check")
    print("=" * 50)

    results = scanet.run_gradcheck_suite(names=["conv2d", "softmax", "group_norm"])
    print(scanet.format_gradcheck_table(results))
    return results


def run_all_examples():
    """Run all examples in sequence."""
    print("🚀 SCANet Examples - Complete Demonstration")
    print("=" * 60)

    model_config, train_config = scanet.expand_preset("tiny")
    params = scanet.data.SyntheticParams(num_slices=model_config.num_slices, height=model_config.slice_height,
                                         width=model_config.slice_width)

    results = []
    try:
        results.append(example_1_autodiff_graph())
        print("\n" + "─" * 60)
        studies = example_2_synthetic_cohort(params)
        results.append(studies)
        print("\n" + "─" * 60)
        model = example_3_build_and_inspect(model_config)
        results.append(model)
        print("\n" + "─" * 60)
        results.append(example_4_train_and_evaluate(model, studies, train_config))
        print("\n" + "─" * 60)
        results.append(example_5_attention_export(model, studies[0]))
        print("\n" + "─" * 60)
        results.append(example_6_gradcheck())
    except Exception as e:
        print(f"❌ Error: {e}")
        import traceback
        traceback.print_exc()

    print(f"\n🎉 Completed {len(results)} of 6 examples!")
    return results


if __name__ == "__main__":
    run_all_examples()
