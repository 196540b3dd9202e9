"""Feature matrices from tapped activations, z-scoring, and the SPFT container.

SPFT layout (little-endian)::

    b"SPFT"  u32 version (=1)  u32 n_samples  u32 n_features
    n_samples x u8 labels
    n_samples * n_features x f32 values (row-major)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from seedpure.errors import (BadMagicError, FormatError, LeakageError, ShapeError,
                             TrainingError, TruncatedFileError, UnsupportedVersionError)
from seedpure.models import forward_taps

SPFT_MAGIC = b"SPFT"
SPFT_VERSION = 1
STD_EPSILON = 1e-8

FLATTEN = "flatten"
AVGPOOL = "avgpool"


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # float32 (n_samples, n_features)
    labels: np.ndarray  # uint8 (n_samples,), 1 = positive variety
    role: Optional[str] = None  # provenance tag: "train" / "test" / None

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError(f"feature values must be 2-D, got shape {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise ShapeError(
                f"labels length {self.labels.shape} != n_samples {self.values.shape[0]}")

    @classmethod
    def build(cls, values, labels=None, role=None) -> "FeatureMatrix":
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim == 1:
            values = values[None]
        if labels is None:
            labels = np.zeros(values.shape[0], dtype=np.uint8)
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        if np.any(labels > 1):
            raise ValueError("labels must be 0 or 1")
        return cls(values, labels, role)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, index, role=None) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.intp)
        return FeatureMatrix(np.ascontiguousarray(self.values[index]),
                             np.ascontiguousarray(self.labels[index]),
                             role if role is not None else self.role)

    def with_role(self, role: Optional[str]) -> "FeatureMatrix":
        return replace(self, role=role)


def _vectorize(act: np.ndarray, mode: str) -> np.ndarray:
    if mode == FLATTEN:
        return act.reshape(act.shape[0], -1)
    if mode == AVGPOOL:
        return act.astype(np.float64).mean(axis=(2, 3)).astype(np.float32)
    raise ValueError(f"unknown feature mode {mode!r}")


def extract_features_multi(graph, weights, images: Sequence[np.ndarray], taps: Sequence[str],
                           batch_size: int = 8, labels=None, mode: str = FLATTEN,
                           ) -> Dict[str, FeatureMatrix]:
    """Run the graph once per batch and collect every requested tap.

    Rows follow input order; samples are evaluated one at a time inside the
    convolution so the result does not depend on ``batch_size``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(images)
    rows = {t: [] for t in taps}
    for start in range(0, n, batch_size):
        chunk = [np.asarray(im, dtype=np.float32).reshape(graph.input_geometry)
                 for im in images[start:start + batch_size]]
        acts = forward_taps(graph, weights, np.stack(chunk), taps)
        for t in taps:
            rows[t].append(_vectorize(acts[t], mode))
    out = {}
    for t in taps:
        if rows[t]:
            values = np.concatenate(rows[t], axis=0)
        else:
            shape = graph.tap_shape(t)
            width = int(np.prod(shape)) if mode == FLATTEN else shape[0]
            values = np.zeros((0, width), dtype=np.float32)
        out[t] = FeatureMatrix.build(values, labels)
    return out


def extract_features(graph, weights, images: Sequence[np.ndarray], tap: str,
                     batch_size: int = 8, labels=None, mode: str = FLATTEN) -> FeatureMatrix:
    return extract_features_multi(graph, weights, images, [tap], batch_size, labels, mode)[tap]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray  # float64 (n_features,)
    std: np.ndarray   # float64 (n_features,), population std
    epsilon: float = STD_EPSILON

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def fit_standardizer(train: FeatureMatrix, epsilon: float = STD_EPSILON) -> Standardizer:
    if train.role == "test":
        raise LeakageError("standardizer fitted on test rows")
    if train.n_samples < 2:
        raise TrainingError("fit_standardizer needs at least 2 samples")
    x = train.values.astype(np.float64)
    mean = x.mean(axis=0)
    lo = x.min(axis=0)
    const = lo == x.max(axis=0)
    mean[const] = lo[const]
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    std[const] = 0.0
    return Standardizer(mean, std, epsilon)


def apply_standardizer(s: Standardizer, m: FeatureMatrix) -> FeatureMatrix:
    if m.n_features != s.n_features:
        raise ShapeError(f"standardizer expects {s.n_features} features, got {m.n_features}")
    z = (m.values.astype(np.float64) - s.mean) / (s.std + s.epsilon)
    return FeatureMatrix(np.ascontiguousarray(z, dtype=np.float32), m.labels, m.role)


def encode_features(m: FeatureMatrix) -> bytes:
    return b"".join([
        SPFT_MAGIC,
        struct.pack("<III", SPFT_VERSION, m.n_samples, m.n_features),
        np.ascontiguousarray(m.labels, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(m.values, dtype="<f4").tobytes(),
    ])


def decode_features(data: bytes) -> FeatureMatrix:
    if len(data) < 4 or data[:4] != SPFT_MAGIC:
        raise BadMagicError("not an SPFT file (bad magic)")
    if len(data) < 16:
        raise TruncatedFileError("SPFT header truncated")
    version, n, d = struct.unpack_from("<III", data, 4)
    if version != SPFT_VERSION:
        raise UnsupportedVersionError(f"SPFT version {version} unsupported")
    need = 16 + n + 4 * n * d
    if len(data) < need:
        raise TruncatedFileError(f"SPFT truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise FormatError(f"SPFT has {len(data) - need} trailing bytes")
    labels = np.frombuffer(data, dtype=np.uint8, count=n, offset=16).copy()
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=16 + n)
    values = values.astype(np.float32).reshape(n, d)
    return FeatureMatrix(values, labels)


def save_features(m: FeatureMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_features(m))


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        return decode_features(fh.read())
