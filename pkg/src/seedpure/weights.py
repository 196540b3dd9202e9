"""Parameter storage and the SPWT binary container.

SPWT layout (all integers little-endian)::

    b"SPWT"  u32 version (=1)  u32 tensor_count
    repeated tensor_count times:
        u16 name_len, name (UTF-8), u8 rank, rank x u32 dims,
        prod(dims) x f32 values (row-major)
"""
from __future__ import annotations

import os
import struct
from collections.abc import Mapping
from typing import Dict, Iterator

import numpy as np

from seedpure.errors import (BadMagicError, DuplicateNameError, FormatError,
                             TruncatedFileError, UnsupportedVersionError)

SPWT_MAGIC = b"SPWT"
SPWT_VERSION = 1


class WeightStore(Mapping):
    """Read-only mapping from dotted parameter name to float32 array."""

    def __init__(self, tensors=None):
        self._tensors: Dict[str, np.ndarray] = {}
        for name, value in (tensors or {}).items():
            arr = np.array(value, dtype=np.float32, order="C", copy=True)
            if arr.size == 0:
                raise ValueError(f"tensor {name!r} is empty")
            if not 1 <= arr.ndim <= 4:
                raise ValueError(f"tensor {name!r} has rank {arr.ndim}; expected 1..4")
            arr.setflags(write=False)
            self._tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self):
        return f"WeightStore({len(self)} tensors)"

    def equals(self, other: "WeightStore") -> bool:
        """Bitwise equality, including parameter order."""
        if list(self) != list(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes()
            for k in self
        )


def encode_weights(store: Mapping) -> bytes:
    parts = [SPWT_MAGIC, struct.pack("<II", SPWT_VERSION, len(store))]
    for name, arr in store.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"parameter name too long: {name[:40]}...")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(data: bytes) -> WeightStore:
    if len(data) < 4 or data[:4] != SPWT_MAGIC:
        raise BadMagicError("not an SPWT file (bad magic)")
    if len(data) < 12:
        raise TruncatedFileError("SPWT header truncated")
    version, count = struct.unpack_from("<II", data, 4)
    if version != SPWT_VERSION:
        raise UnsupportedVersionError(f"SPWT version {version} unsupported")
    pos = 12
    tensors: Dict[str, np.ndarray] = {}

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(f"SPWT truncated while reading {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"tensor {i} name length"))
        name = take(name_len, f"tensor {i} name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"{name} rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        n = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(take(4 * n, f"{name} values"), dtype="<f4")
        if name in tensors:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        tensors[name] = values.reshape(dims)
    if pos != len(data):
        raise FormatError(f"SPWT has {len(data) - pos} trailing bytes")
    return WeightStore(tensors)


def save_weights(store: Mapping, path) -> None:
    data = encode_weights(store)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write weights to {os.fspath(path)}: {exc.strerror}") from exc


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        return decode_weights(fh.read())


def random_init(graph, seed: int, include_head: bool = False) -> WeightStore:
    """Seeded weights for every parameter reachable by the graph's taps.

    Conv/linear weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases and
    beta are zero; gamma one; running statistics (0, 1), so batch norm
    starts as the identity.
    """
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    specs = graph.parameters()
    if include_head:
        specs = specs + graph.head_parameters()
    tensors = {}
    for spec in specs:
        if spec.role == "weight":
            bound = 1.0 / np.sqrt(spec.fan_in)
            tensors[spec.name] = rng.uniform(-bound, bound, spec.shape).astype(np.float32)
        elif spec.role in ("gamma", "running_var"):
            tensors[spec.name] = np.ones(spec.shape, dtype=np.float32)
        else:
            tensors[spec.name] = np.zeros(spec.shape, dtype=np.float32)
    return WeightStore(tensors)
