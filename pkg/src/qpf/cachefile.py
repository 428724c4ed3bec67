"""Binary containers: ``QPFF`` feature/dataset caches and ``QPFM`` checkpoints.

QPFF (all little-endian)::

    b"QPFF" | u32 version | u32 images | u32 channels | u32 rows | u32 cols
    | u32 label_width | images x (uint label, float32[channels*rows*cols])

QPFM::

    b"QPFM" | u32 version | u32 inputs | u32 hidden | u32 classes | u32 activation
    | float64 W1[hidden, inputs] | b1[hidden] | W2[classes, hidden] | b2[classes]
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"QPFF"
MODEL_MAGIC = b"QPFM"
FORMAT_VERSION = 1

_FEATURE_HEADER = struct.Struct("<4s6I")
_MODEL_HEADER = struct.Struct("<4s5I")
_LABEL_DTYPES = {1: "<u1", 2: "<u2", 4: "<u4"}


class CacheFormatError(ValueError):
    pass


def _atomic_write(path: Path, chunks) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp, path)


def _label_width(labels: np.ndarray) -> int:
    top = int(labels.max()) if labels.size else 0
    for width in (1, 2, 4):
        if top < 1 << (8 * width):
            return width
    raise ValueError(f"label {top} does not fit in 32 bits")


def _record_dtype(label_width: int, values: int) -> np.dtype:
    return np.dtype([("label", _LABEL_DTYPES[label_width]), ("values", "<f4", (values,))])


def write_features(path, features: np.ndarray, labels: np.ndarray) -> None:
    """Store ``(n, channels, rows, cols)`` features as float32 with their labels."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    if features.ndim != 4:
        raise ValueError(f"features must be 4-D (n, channels, rows, cols), got {features.shape}")
    n, channels, rows, cols = features.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    width = _label_width(labels)
    records = np.empty(n, dtype=_record_dtype(width, channels * rows * cols))
    records["label"] = labels
    records["values"] = features.reshape(n, -1)
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n, channels, rows, cols, width)
    _atomic_write(path, [header, records.tobytes()])


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    """Load a QPFF file; returns ``(float32 features, int64 labels)``."""
    data = Path(path).read_bytes()
    if len(data) < _FEATURE_HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, n, channels, rows, cols, width = _FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    if width not in _LABEL_DTYPES:
        raise CacheFormatError(f"{path}: bad label width {width}")
    dtype = _record_dtype(width, channels * rows * cols)
    payload = len(data) - _FEATURE_HEADER.size
    if payload != n * dtype.itemsize:
        raise CacheFormatError(f"{path}: expected {n * dtype.itemsize} payload bytes, found {payload}")
    records = np.frombuffer(data, dtype=dtype, count=n, offset=_FEATURE_HEADER.size)
    features = records["values"].reshape(n, channels, rows, cols).copy()
    return features, records["label"].astype(np.int64)


ACTIVATIONS = ("identity", "relu")


def write_model(path, params) -> None:
    w1, b1, w2, b2 = (np.asarray(a, dtype="<f8") for a in (params.W1, params.b1, params.W2, params.b2))
    hidden, inputs = w1.shape
    classes = w2.shape[0]
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, FORMAT_VERSION, inputs, hidden, classes, ACTIVATIONS.index(params.activation)
    )
    _atomic_write(path, [header] + [a.tobytes() for a in (w1, b1, w2, b2)])


def read_model(path):
    from .nn import ModelParams

    data = Path(path).read_bytes()
    if len(data) < _MODEL_HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, inputs, hidden, classes, act = _MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise CacheFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{path}: unsupported version {version}")
    if act >= len(ACTIVATIONS):
        raise CacheFormatError(f"{path}: unknown activation code {act}")
    shapes = [(hidden, inputs), (hidden,), (classes, hidden), (classes,)]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(data) - _MODEL_HEADER.size != expected:
        raise CacheFormatError(f"{path}: expected {expected} tensor bytes")
    arrays, offset = [], _MODEL_HEADER.size
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(data, "<f8", count, offset).reshape(shape).astype(np.float64))
        offset += count * 8
    return ModelParams(*arrays, activation=ACTIVATIONS[act])
