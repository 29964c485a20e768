"""
Command-line entry point: ``scanet <command> [options]``.

Commands:
    gen-data     write a synthetic cohort (SCV1 files + manifest.json)
    train        fit a model on a cohort; writes checkpoint, model card and history CSV
    eval         evaluate a checkpoint on a cohort
    cv           stratified k-fold cross-validation (optionally against the ResNet baseline)
    gradcheck    finite-difference verification of every primitive and the tiny model
    attn-export  export spatial and slice attention of one study
    inspect      show a model card and parameters, or the registered ops

Exit codes: 0 success, 1 verification failure, 2 usage or data error.
"""

import argparse
from dataclasses import replace
from datetime import datetime
import logging
from pathlib import Path
import sys
from typing import List, Optional

from .attention_export import export_attention
from .config import PRESETS, RunConfig, build_run_config
from .data import (
    SyntheticParams, generate_synthetic_cohort, load_cohort, load_manifest, load_study, permute_labels,
    region_mean_scores, stack_studies,
)
from .errors import ArgumentError, ConfigError, ScanetError, VerificationError, exit_code_for
from .evaluation import EvalReport, aggregate_report, compare_reports, evaluate_fold, roc_auc
from .gradcheck import format_gradcheck_table, inject_fault, run_gradcheck_suite
from .inspect_model import inspect_model, inspect_op, list_models, list_ops, search_ops
from .model import build_model, card_path_for, load_model, predict_proba, save_model
from .settings import update_settings
from .training import run_cross_validation, train, write_history_csv

_logger = logging.getLogger(__name__)


def _parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got '{text}'")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (falls back to $SCANET_SEED)")
    common.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    presets = common.add_mutually_exclusive_group()
    presets.add_argument("--preset", choices=sorted(PRESETS), default=None)
    presets.add_argument("--toy", dest="preset", action="store_const", const="toy")
    presets.add_argument("--paper-scale", dest="preset", action="store_const", const="paper-scale")
    common.add_argument("--set", dest="overrides", type=_parse_override, action="append", default=[],
                        metavar="KEY=VALUE", help="Override one configuration field")
    common.add_argument("--single-thread", action="store_true", help="Run folds sequentially and deterministically")
    common.add_argument("--out", type=Path, default=Path("runs"), help="Root directory for run artifacts")
    common.add_argument("--run-name", default=None, help="Name of the run subdirectory (default: command + timestamp)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scanet", description="SCANet training, evaluation and verification")
    common = _common_parser()
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", parents=[common], help="Write a synthetic cohort")
    gen.add_argument("--n", type=int, required=True, help="Number of studies")
    gen.set_defaults(handler=cmd_gen_data)

    trn = commands.add_parser("train", parents=[common], help="Train a model on a cohort")
    trn.add_argument("--data", type=Path, required=True, help="Cohort manifest or its directory")
    trn.add_argument("--baseline", action="store_true", help="Train the ResNet baseline instead")
    trn.set_defaults(handler=cmd_train)

    evl = commands.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a cohort")
    evl.add_argument("--model", type=Path, required=True, help="Checkpoint written by 'train'")
    evl.add_argument("--data", type=Path, required=True)
    evl.set_defaults(handler=cmd_eval)

    cv = commands.add_parser("cv", parents=[common], help="Stratified k-fold cross-validation")
    cv.add_argument("--data", type=Path, required=True)
    cv.add_argument("--k", type=int, default=5)
    cv.add_argument("--workers", type=int, default=1)
    cv.add_argument("--baseline", action="store_true", help="Also run the ResNet baseline on the same folds")
    cv.add_argument("--permute-labels", action="store_true", help="Shuffle labels (null control)")
    cv.set_defaults(handler=cmd_cv)

    grad = commands.add_parser("gradcheck", parents=[common], help="Verify every backward pass")
    grad.add_argument("--tolerance", type=float, default=1e-3)
    grad.add_argument("--case", dest="cases", action="append", default=None, help="Run only this case")
    grad.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    grad.set_defaults(handler=cmd_gradcheck)

    attn = commands.add_parser("attn-export", parents=[common], help="Export attention maps of one study")
    attn.add_argument("--model", type=Path, required=True)
    attn.add_argument("--study", type=Path, required=True, help="SCV1 study file")
    attn.set_defaults(handler=cmd_attn_export)

    insp = commands.add_parser("inspect", parents=[common], help="Show a model or the registered ops")
    insp.add_argument("--model", type=Path, default=None)
    insp.add_argument("--search", default=None, help="Regex over registered op names")
    insp.add_argument("--op", default=None, help="Show the class and summary of one registered op")
    insp.set_defaults(handler=cmd_inspect)
    return parser


def _run_config(args) -> RunConfig:
    update_settings(single_thread=args.single_thread)
    return build_run_config(preset=args.preset, config_path=args.config, overrides=dict(args.overrides),
                            seed=args.seed, out=args.out, single_thread=args.single_thread,
                            workers=getattr(args, "workers", 1), data=getattr(args, "data", None))


def _run_dir(args) -> Path:
    name = args.run_name or f"{args.command}-{datetime.now().strftime('%Y%m%d-%H%M%S')}"
    path = Path(args.out) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest_path(data: Path) -> Path:
    return data / "manifest.json" if data.is_dir() else data


def _load_cohort(data: Path, run: RunConfig):
    manifest = load_manifest(_manifest_path(data))
    studies = load_cohort(manifest)
    expected = (run.model.num_slices, run.model.slice_height, run.model.slice_width)
    for study in studies:
        if tuple(study.shape) != expected:
            raise ConfigError(f"study {study.id} has shape {study.shape} but the '{run.preset}' configuration "
                              f"expects {expected}")
    return manifest, studies


def _write_report(run_dir: Path, report: EvalReport, stem: str = "report"):
    (run_dir / f"{stem}.json").write_text(report.to_json() + "\n")
    (run_dir / f"{stem}.txt").write_text(report.format_table() + "\n")


def cmd_gen_data(args) -> int:
    run = _run_config(args)
    params = SyntheticParams(num_slices=run.model.num_slices, height=run.model.slice_height,
                             width=run.model.slice_width)
    if args.n < 2:
        raise ArgumentError(f"--n must be at least 2 so both classes appear, got {args.n}")
    run_dir = _run_dir(args)
    manifest = generate_synthetic_cohort(args.n, run.seed, run_dir, params)
    counts = manifest.class_counts()
    print(f"Manifest: {run_dir / 'manifest.json'}")
    print(f"Studies: {len(manifest.studies)} (label 0: {counts[0]}, label 1: {counts[1]})")
    studies = load_cohort(manifest)
    oracle = roc_auc(region_mean_scores(studies, params), [study.label for study in studies])
    print(f"Territory-mean oracle ROC-AUC: {oracle:.4f}")
    return 0


def cmd_train(args) -> int:
    run = _run_config(args)
    model_config = replace(run.model, variant="resnet") if args.baseline else run.model
    _, studies = _load_cohort(args.data, run)
    run_dir = _run_dir(args)
    model = build_model(model_config, seed=run.seed)
    _, history = train(model, studies, run.train)
    checkpoint = run_dir / "model.sckp"
    card = save_model(model, checkpoint, run.train)
    write_history_csv(run_dir / "history.csv", history)
    print(f"Checkpoint: {checkpoint}")
    print(f"Model card: {card}")
    print(f"History: {run_dir / 'history.csv'} ({history.epochs} epochs, best epoch {history.best_epoch}, "
          f"{history.stop_reason})")
    return 0


def cmd_eval(args) -> int:
    run = _run_config(args)
    model = load_model(args.model)
    _, studies = _load_cohort(args.data, replace(run, model=model.config))
    volumes, labels = stack_studies(studies)
    probabilities = predict_proba(model, volumes, run.train.batch_size)
    name = "SCANet" if model.variant == "scanet" else "ResNet"
    report = aggregate_report([evaluate_fold(probabilities, labels)], model=name)
    run_dir = _run_dir(args)
    _write_report(run_dir, report)
    print(report.format_table())
    print(f"Report: {run_dir / 'report.json'}")
    return 0


def cmd_cv(args) -> int:
    run = _run_config(args)
    if args.k < 2:
        raise ArgumentError(f"--k must be at least 2, got {args.k}")
    if args.workers < 1:
        raise ArgumentError(f"--workers must be at least 1, got {args.workers}")
    _, studies = _load_cohort(args.data, run)
    volumes, labels = stack_studies(studies)
    if args.permute_labels:
        labels = permute_labels(labels, run.seed)
        _logger.info("Labels permuted for the null control")
    run_dir = _run_dir(args)
    report, _ = run_cross_validation((volumes, labels), args.k, run.model, run.train,
                                     variant="scanet", workers=args.workers)
    _write_report(run_dir, report)
    if args.baseline:
        baseline, _ = run_cross_validation((volumes, labels), args.k, run.model, run.train,
                                           variant="resnet", workers=args.workers)
        _write_report(run_dir, baseline, stem="baseline_report")
        table = compare_reports(report, baseline)
        (run_dir / "comparison.txt").write_text(table + "\n")
        print(table)
    else:
        print(report.format_table())
    print(f"Report: {run_dir / 'report.json'}")
    return 0


def cmd_gradcheck(args) -> int:
    run = _run_config(args)
    if args.inject_fault:
        with inject_fault(args.inject_fault):
            results = run_gradcheck_suite(args.tolerance, args.cases, seed=run.seed)
    else:
        results = run_gradcheck_suite(args.tolerance, args.cases, seed=run.seed)
    table = format_gradcheck_table(results)
    run_dir = _run_dir(args)
    (run_dir / "gradcheck.txt").write_text(table + "\n")
    print(table)
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise VerificationError(f"gradient check failed for: {', '.join(failed)}")
    return 0


def cmd_attn_export(args) -> int:
    _run_config(args)
    model = load_model(args.model)
    study = load_study(args.study)
    run_dir = _run_dir(args)
    summary = export_attention(model, study, run_dir)
    print(f"Probabilities: unfavorable {summary.probabilities[0]:.4f}, favorable {summary.probabilities[1]:.4f}")
    print(f"Spatial maps: {len(summary.sat_files)} (slices: {summary.num_slice_maps})")
    print(f"Slice importance: {summary.cat_file}")
    return 0


def cmd_inspect(args) -> int:
    if args.model is not None:
        print(card_path_for(args.model).read_text().rstrip())
        inspect_model(load_model(args.model))
        return 0
    if args.op is not None:
        inspect_op(args.op)
        return 0
    names = search_ops(args.search) if args.search else list_ops()
    print(f"Ops: {', '.join(names)}")
    print(f"Models: {', '.join(list_models())}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ScanetError, OSError) as e:
        _logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
