"""
Synthetic dual-modality cohort with a planted, label-correlated region.

Every study draws from its own generator seeded by (cohort seed, index), so
studies can be produced in any order or in parallel with identical bytes.
"""

from dataclasses import asdict, dataclass
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import scipy.ndimage as spn

from ..errors import ArgumentError
from .manifest import CohortManifest, ManifestEntry, write_manifest
from .study import PatientStudy, save_study

_logger = logging.getLogger(__name__)


@dataclass
class SyntheticParams:
    num_slices: int = 8
    height: int = 32
    width: int = 32
    ct_background: float = 0.35
    cta_background: float = 0.45
    smooth_amplitude: float = 0.01
    noise_sigma: float = 0.05
    center: Tuple[float, float, float] = (0.5, 0.5, 0.6)  # (slice, row, col) fractions
    radius: Tuple[float, float, float] = (1.0 / 6.0, 0.12, 0.12)
    jitter: float = 0.1
    unfavorable_cta: float = 0.30
    unfavorable_ct: float = 0.10
    favorable_cta: float = 0.10
    favorable_ct: float = 0.0

    @classmethod
    def from_dict(cls, values: dict) -> "SyntheticParams":
        values = dict(values)
        for key in ("center", "radius"):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.num_slices, self.height, self.width)


def _ellipsoid(shape: Tuple[int, int, int], center: np.ndarray, radii: np.ndarray) -> np.ndarray:
    z, y, x = np.indices(shape)
    return (((z - center[0]) / radii[0]) ** 2
            + ((y - center[1]) / radii[1]) ** 2
            + ((x - center[2]) / radii[2]) ** 2) <= 1.0


def _extent(params: SyntheticParams) -> np.ndarray:
    return np.array(params.shape, dtype=np.float64)


def nominal_center(params: SyntheticParams) -> np.ndarray:
    return np.array(params.center) * _extent(params) - 0.5


def territory_mask(params: SyntheticParams, dilate_by_jitter: bool = True) -> np.ndarray:
    """Voxels the planted region can reach; the nominal ellipsoid grown by the jitter range."""
    extent = _extent(params)
    radii = np.array(params.radius) * extent
    if dilate_by_jitter:
        radii = radii + params.jitter * extent
    return _ellipsoid(params.shape, nominal_center(params), radii)


def _smooth_field(rng: np.random.Generator, params: SyntheticParams) -> np.ndarray:
    field = spn.gaussian_filter(rng.standard_normal(params.shape), sigma=_extent(params) / 4.0)
    std = field.std()
    return (field - field.mean()) / std if std > 0 else field


def generate_study(index: int, label: int, seed: int, params: SyntheticParams) -> PatientStudy:
    rng = np.random.default_rng([seed, index])
    extent = _extent(params)
    center = nominal_center(params) + rng.uniform(-params.jitter, params.jitter, size=3) * extent
    region = _ellipsoid(params.shape, center, np.array(params.radius) * extent)

    volumes = []
    for background, boost in (
        (params.ct_background, params.unfavorable_ct if label == 0 else params.favorable_ct),
        (params.cta_background, params.unfavorable_cta if label == 0 else params.favorable_cta),
    ):
        volume = background + params.smooth_amplitude * _smooth_field(rng, params)
        volume = volume + rng.normal(0.0, params.noise_sigma, size=params.shape)
        volume[region] += boost
        volumes.append(np.clip(volume, 0.0, 1.0).astype(np.float32))
    return PatientStudy(id=f"study_{index:04d}", ct=volumes[0], cta=volumes[1], label=label)


def make_synthetic_studies(n: int, seed: int, params: SyntheticParams = None) -> List[PatientStudy]:
    """In-memory cohort; labels alternate 0, 1, 0, ..."""
    if n < 2:
        raise ArgumentError(f"a cohort needs at least 2 studies so both classes appear, got n={n}")
    params = params or SyntheticParams()
    return [generate_study(index, index % 2, seed, params) for index in range(n)]


def generate_synthetic_cohort(n: int, seed: int, out_dir: Union[str, Path],
                              params: SyntheticParams = None) -> CohortManifest:
    """Write ``n`` SCV1 files plus ``manifest.json`` under ``out_dir``."""
    params = params or SyntheticParams()
    studies = make_synthetic_studies(n, seed, params)
    out_dir = Path(out_dir)
    (out_dir / "studies").mkdir(parents=True, exist_ok=True)
    entries = []
    for study in studies:
        relative = Path("studies") / f"{study.id}.scv"
        save_study(out_dir / relative, study)
        entries.append(ManifestEntry(path=relative.as_posix(), id=study.id, label=study.label))
    manifest = CohortManifest(seed=seed, params=asdict(params), studies=entries, root=out_dir)
    write_manifest(out_dir / "manifest.json", manifest)
    counts = manifest.class_counts()
    _logger.info(f"Wrote {n} synthetic studies to {out_dir} (label 0: {counts[0]}, label 1: {counts[1]})")
    return manifest


def region_mean_scores(studies: Sequence[PatientStudy], params: SyntheticParams = None) -> np.ndarray:
    """Negated mean CTA over the territory; larger means more likely favorable (label 1)."""
    params = params or SyntheticParams()
    mask = territory_mask(params)
    return np.array([-float(study.cta[mask].mean()) for study in studies])
