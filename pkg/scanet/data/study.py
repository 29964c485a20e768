"""
Patient studies and the "SCV1" study file.

SCV1 layout, little-endian, 24-byte header:
    magic "SCV1" | u32 version=1 | u32 S | u32 H | u32 W | u8 label | 3 padding bytes
followed by the CT volume then the CTA volume as float32, row-major (slice, row, col).
"""

from dataclasses import dataclass
from pathlib import Path
import struct
from typing import Sequence, Tuple, Union

import numpy as np

from ..errors import ArgumentError, ConfigError, FormatError, NumericError

STUDY_MAGIC = b"SCV1"
STUDY_VERSION = 1
HEADER = struct.Struct("<4sIIIIB3x")


@dataclass
class PatientStudy:
    id: str
    ct: np.ndarray
    cta: np.ndarray
    label: int

    def __post_init__(self):
        self.ct = np.ascontiguousarray(self.ct, dtype=np.float32)
        self.cta = np.ascontiguousarray(self.cta, dtype=np.float32)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.ct.shape

    def validate(self) -> "PatientStudy":
        if self.ct.ndim != 3 or self.ct.shape != self.cta.shape:
            raise ArgumentError(f"study {self.id}: CT {self.ct.shape} and CTA {self.cta.shape} "
                                f"must be equal-shape S x H x W volumes")
        if self.label not in (0, 1):
            raise ArgumentError(f"study {self.id}: label must be 0 or 1, got {self.label}")
        if not (np.all(np.isfinite(self.ct)) and np.all(np.isfinite(self.cta))):
            raise NumericError(f"study {self.id}: volumes contain non-finite intensities")
        return self


def study_file_size(num_slices: int, height: int, width: int) -> int:
    return HEADER.size + 2 * num_slices * height * width * 4


def encode_study(study: PatientStudy) -> bytes:
    study.validate()
    s, h, w = study.shape
    header = HEADER.pack(STUDY_MAGIC, STUDY_VERSION, s, h, w, study.label)
    return header + study.ct.astype("<f4").tobytes() + study.cta.astype("<f4").tobytes()


def decode_study(data: bytes, study_id: str = "") -> PatientStudy:
    if len(data) < HEADER.size:
        raise FormatError(f"file holds {len(data)} bytes, shorter than the {HEADER.size}-byte header",
                          offset=len(data))
    magic, version, s, h, w, label = HEADER.unpack_from(data, 0)
    if magic != STUDY_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {STUDY_MAGIC!r}", offset=0)
    if version != STUDY_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if min(s, h, w) < 1:
        raise FormatError(f"invalid volume extents {s}x{h}x{w}", offset=8)
    if label not in (0, 1):
        raise FormatError(f"label must be 0 or 1, got {label}", offset=20)
    expected = study_file_size(s, h, w)
    if len(data) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after the CTA payload", offset=expected)
    count = s * h * w
    volumes = np.frombuffer(data, dtype="<f4", count=2 * count, offset=HEADER.size).astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(volumes))
    if bad.size:
        raise FormatError("non-finite intensity in payload", offset=HEADER.size + 4 * int(bad[0]))
    return PatientStudy(
        id=study_id,
        ct=volumes[:count].reshape(s, h, w),
        cta=volumes[count:].reshape(s, h, w),
        label=int(label),
    )


def save_study(path: Union[str, Path], study: PatientStudy):
    Path(path).write_bytes(encode_study(study))


def load_study(path: Union[str, Path], study_id: str = None) -> PatientStudy:
    path = Path(path)
    return decode_study(path.read_bytes(), study_id=study_id if study_id is not None else path.stem)


def normalize(volume: np.ndarray, window: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Map ``[low, high]`` linearly onto ``[0, 1]`` and clamp."""
    low, high = window
    if low >= high:
        raise ConfigError(f"normalization window needs low < high, got [{low}, {high}]")
    volume = np.asarray(volume, dtype=np.float32)
    if not np.all(np.isfinite(volume)):
        raise NumericError("cannot normalize a volume with non-finite intensities")
    return np.clip((volume - low) / (high - low), 0.0, 1.0).astype(np.float32)


def study_to_array(study: PatientStudy, window: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """(S, 2, H, W) float32 with CT and CTA as channels, both normalized."""
    study.validate()
    return np.stack([normalize(study.ct, window), normalize(study.cta, window)], axis=1)


def stack_studies(studies: Sequence[PatientStudy],
                  window: Tuple[float, float] = (0.0, 1.0)) -> Tuple[np.ndarray, np.ndarray]:
    """(N, S, 2, H, W) volumes and (N,) integer labels."""
    if not studies:
        raise ArgumentError("no studies to stack")
    shapes = {study.shape for study in studies}
    if len(shapes) != 1:
        raise ArgumentError(f"studies have differing shapes: {sorted(shapes)}")
    volumes = np.stack([study_to_array(study, window) for study in studies])
    labels = np.array([study.label for study in studies], dtype=int)
    return volumes, labels
