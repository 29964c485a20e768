"""
Binary checkpoints, JSON conversion and grayscale image encoding.

Checkpoint layout ("SCKP", little-endian):
    magic "SCKP" | u32 version=1 | u32 parameter count
    per parameter: u32 name length | utf-8 name | u32 rank | rank x u32 extents | float32 payload
Parameters are written in the model's canonical registration order.
"""

from collections import OrderedDict
import dataclasses
from io import BytesIO
import math
from pathlib import Path
import struct
from typing import Any, Iterable, Optional, Tuple, Union

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError

CHECKPOINT_MAGIC = b"SCKP"
CHECKPOINT_VERSION = 1
_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4sII")


def save_checkpoint(path: Union[str, Path], named_params: Iterable[Tuple[str, Any]]):
    """Write ``(name, array-like)`` pairs; Parameter objects are accepted as values."""
    entries = [(name, np.asarray(getattr(value, "data", value), dtype="<f4")) for name, value in named_params]
    chunks = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(entries))]
    for name, array in entries:
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: Union[str, Path]) -> "OrderedDict[str, np.ndarray]":
    data = Path(path).read_bytes()
    return decode_checkpoint(data)


def decode_checkpoint(data: bytes) -> "OrderedDict[str, np.ndarray]":
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise FormatError(f"checkpoint truncated while reading {what}", offset=offset)
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    magic, version, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)

    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_length,) = _U32.unpack(take(4, "name length"))
        try:
            name = take(name_length, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"parameter name is not utf-8: {e}", offset=offset - name_length) from e
        (rank,) = _U32.unpack(take(4, f"rank of '{name}'"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"shape of '{name}'"))
        payload = take(4 * math.prod(shape), f"payload of '{name}'")
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after the last parameter", offset=offset)
    return params


def make_json_compatible(value: Any) -> Any:
    """Convert numpy scalars/arrays, dataclasses, tuples and paths into plain JSON types.

    Non-finite floats become None so the output is strict JSON.
    """
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: make_json_compatible(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(key): make_json_compatible(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [make_json_compatible(item) for item in value]
    if isinstance(value, np.ndarray):
        return make_json_compatible(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def to_grayscale_image(values: np.ndarray, size: Optional[Tuple[int, int]] = None) -> Image.Image:
    """Min-max scale a 2D array to 8-bit grayscale, optionally resized to (width, height)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"expected a 2D array for image export, got shape {values.shape}")
    low, high = float(values.min()), float(values.max())
    scaled = (values - low) / (high - low) if high > low else np.zeros_like(values)
    image = Image.fromarray((scaled * 255).round().astype(np.uint8))
    if size is not None and image.size != tuple(size):
        image = image.resize(tuple(size), resample=Image.BILINEAR)
    return image


def encode_png(values: np.ndarray, size: Optional[Tuple[int, int]] = None) -> bytes:
    buff = BytesIO()
    to_grayscale_image(values, size).save(buff, format="PNG")
    return buff.getvalue()


def save_png(path: Union[str, Path], values: np.ndarray, size: Optional[Tuple[int, int]] = None):
    Path(path).write_bytes(encode_png(values, size))
