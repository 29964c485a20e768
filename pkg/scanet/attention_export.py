"""
Write attention maps of one study to CSV and grayscale PNG files.

Layout under the output directory:
    sat/slice_{s:02d}_layer_{l}_head_{h}.csv|.png   T x T spatial attention
    cat_importance.csv                              one row per neighborhood, K columns
    saliency/slice_{s:02d}.png                      last-layer token saliency resized to H x W
"""

import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .errors import ConfigError, VerificationError
from .model import ROW_SUM_TOLERANCE, AttentionRecord, StudyModel, predict_study
from .data.study import PatientStudy
from .serialize import save_png

_logger = logging.getLogger(__name__)


@dataclass
class ExportSummary:
    out_dir: Path
    probabilities: np.ndarray
    sat_files: List[Path] = field(default_factory=list)
    saliency_files: List[Path] = field(default_factory=list)
    cat_file: Path = None
    max_row_error: float = 0.0

    @property
    def num_slice_maps(self) -> int:
        return len(self.saliency_files)


def _write_matrix(path: Path, matrix: np.ndarray):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for row in np.atleast_2d(matrix):
            writer.writerow([f"{value:.8g}" for value in row])


def _check_rows(name: str, rows: np.ndarray, tolerance: float) -> float:
    error = float(np.max(np.abs(rows.sum(axis=-1) - 1.0))) if rows.size else 0.0
    if error > tolerance or (rows.size and rows.min() < 0):
        raise VerificationError(f"{name}: attention rows deviate from 1 by {error:.2e}")
    return error


def export_record(record: AttentionRecord, grid: Tuple[int, int], image_size: Tuple[int, int],
                  out_dir: Union[str, Path], tolerance: float = ROW_SUM_TOLERANCE) -> ExportSummary:
    """Write every map of ``record``; ``image_size`` is the study's (H, W)."""
    if record.is_empty:
        raise VerificationError("attention record is empty (model variant without attention)")
    out_dir = Path(out_dir)
    (out_dir / "sat").mkdir(parents=True, exist_ok=True)
    (out_dir / "saliency").mkdir(parents=True, exist_ok=True)
    summary = ExportSummary(out_dir=out_dir, probabilities=np.zeros(2))
    worst = 0.0

    num_slices, num_layers, num_heads = record.sat_maps.shape[:3]
    for s in range(num_slices):
        for layer in range(num_layers):
            for head in range(num_heads):
                matrix = record.sat_maps[s, layer, head]
                stem = f"slice_{s:02d}_layer_{layer}_head_{head}"
                worst = max(worst, _check_rows(stem, matrix, tolerance))
                _write_matrix(out_dir / "sat" / f"{stem}.csv", matrix)
                save_png(out_dir / "sat" / f"{stem}.png", matrix)
                summary.sat_files.append(out_dir / "sat" / f"{stem}.csv")

    height, width = image_size
    saliency = record.spatial_saliency(grid)
    for s, grid_map in enumerate(saliency):
        path = out_dir / "saliency" / f"slice_{s:02d}.png"
        save_png(path, grid_map, size=(width, height))
        summary.saliency_files.append(path)

    worst = max(worst, _check_rows("cat", record.cat_maps, tolerance))
    summary.cat_file = out_dir / "cat_importance.csv"
    with open(summary.cat_file, "w", newline="") as handle:
        writer = csv.writer(handle)
        k = record.cat_maps.shape[-1]
        writer.writerow(["neighborhood", "slices"] + [f"alpha_{j}" for j in range(k)])
        for b, weights in enumerate(record.cat_maps):
            slices = " ".join(str(i) for i in record.groups[b]) if record.groups else ""
            writer.writerow([b, slices] + [f"{value:.8g}" for value in weights])
    summary.max_row_error = worst
    return summary


def export_attention(model: StudyModel, study: PatientStudy, out_dir: Union[str, Path]) -> ExportSummary:
    """Run ``model`` on ``study`` and export its attention maps."""
    config = model.config
    expected = (config.num_slices, config.slice_height, config.slice_width)
    if tuple(study.shape) != expected:
        raise ConfigError(f"study {study.id} has shape {study.shape}, the model expects {expected}")
    probabilities, record = predict_study(model, study)
    record.validate()
    summary = export_record(record, config.token_grid, (config.slice_height, config.slice_width), out_dir)
    summary.probabilities = probabilities
    _logger.info(f"Exported {len(summary.sat_files)} spatial maps and {len(record.cat_maps)} slice-importance "
                 f"vectors for study {study.id} to {summary.out_dir}")
    return summary
