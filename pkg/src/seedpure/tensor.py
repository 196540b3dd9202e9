"""Forward-pass operators over dense float32 tensors.

Tensors are plain ``numpy.float32`` arrays laid out as (batch, channel,
height, width) for image-like data. Reductions accumulate in float64 and
round once to float32 on output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from seedpure._backend import kernels
from seedpure.errors import ShapeError


def as_tensor(data, shape=None) -> np.ndarray:
    """Return ``data`` as a C-contiguous float32 array of rank 1 to 4."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    if not 1 <= arr.ndim <= 4:
        raise ShapeError(f"tensor rank must be 1..4, got {arr.ndim}")
    if any(s < 1 for s in arr.shape):
        raise ShapeError(f"tensor dimensions must be >= 1, got {arr.shape}")
    return arr


def _check_rank4(x, op):
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected a rank-4 (N, C, H, W) input, got shape {x.shape}")


def out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int
    padding: int
    weights: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        expected = (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if tuple(self.weights.shape) != expected:
            raise ShapeError(f"conv weights shape {tuple(self.weights.shape)} != {expected}")
        if self.bias is not None and tuple(self.bias.shape) != (self.out_channels,):
            raise ShapeError(
                f"conv bias length {self.bias.shape[0]} != out_channels {self.out_channels}"
            )
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("conv stride must be >= 1 and padding >= 0")

    @classmethod
    def from_weights(cls, weights, bias=None, stride=1, padding=0):
        weights = np.asarray(weights, dtype=np.float32)
        co, ci, kh, kw = weights.shape
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float32)
        return cls(ci, co, kh, kw, stride, padding, weights, bias)


@dataclass(frozen=True)
class BatchNormSpec:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        n = len(self.gamma)
        if not (len(self.beta) == len(self.running_mean) == len(self.running_var) == n):
            raise ShapeError("batchnorm parameter arrays differ in length")
        if np.any(np.asarray(self.running_var) < 0):
            raise ValueError("batchnorm running_var must be non-negative")
        if self.epsilon < 0:
            raise ValueError("batchnorm epsilon must be non-negative")

    @property
    def channels(self) -> int:
        return len(self.gamma)


def conv2d(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """2-D cross-correlation (no kernel flip) plus bias."""
    _check_rank4(x, "conv2d")
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv2d: input channels {c} != spec.in_channels {spec.in_channels}")
    p = spec.padding
    if h + 2 * p < spec.kernel_h:
        raise ShapeError(f"conv2d: height {h} + 2*{p} < kernel_h {spec.kernel_h}")
    if w + 2 * p < spec.kernel_w:
        raise ShapeError(f"conv2d: width {w} + 2*{p} < kernel_w {spec.kernel_w}")
    weights = np.ascontiguousarray(spec.weights, dtype=np.float64)
    bias = None if spec.bias is None else np.ascontiguousarray(spec.bias, dtype=np.float64)
    return kernels.conv2d(np.ascontiguousarray(x, dtype=np.float32), weights, bias,
                          spec.stride, p)


def maxpool2d(x: np.ndarray, kernel: int, stride: int, padding: int = 0) -> np.ndarray:
    """Window maximum; padded cells act as -inf and never win."""
    _check_rank4(x, "maxpool2d")
    _, _, h, w = x.shape
    if h + 2 * padding < kernel:
        raise ShapeError(f"maxpool2d: height {h} + 2*{padding} < kernel {kernel}")
    if w + 2 * padding < kernel:
        raise ShapeError(f"maxpool2d: width {w} + 2*{padding} < kernel {kernel}")
    return kernels.maxpool2d(np.ascontiguousarray(x, dtype=np.float32), kernel, stride, padding)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, np.float32(0))


def batchnorm_infer(x: np.ndarray, spec: BatchNormSpec) -> np.ndarray:
    _check_rank4(x, "batchnorm_infer")
    if x.shape[1] != spec.channels:
        raise ShapeError(f"batchnorm_infer: input channels {x.shape[1]} != {spec.channels}")
    gamma = np.asarray(spec.gamma, dtype=np.float64)
    beta = np.asarray(spec.beta, dtype=np.float64)
    mean = np.asarray(spec.running_mean, dtype=np.float64)
    scale = gamma / np.sqrt(np.asarray(spec.running_var, dtype=np.float64) + spec.epsilon)
    y = (x.astype(np.float64) - mean[:, None, None]) * scale[:, None, None] + beta[:, None, None]
    return y.astype(np.float32)


def linear(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``x @ weights + bias`` for x of shape (N, D), weights (D, M)."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ShapeError("linear: expected rank-2 input and weights")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"linear: input dim {x.shape[1]} != weight rows {weights.shape[0]}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({weights.shape[1]},)")
    y = x.astype(np.float64) @ weights.astype(np.float64) + bias.astype(np.float64)
    return y.astype(np.float32)


def add(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if lhs.shape != rhs.shape:
        raise ShapeError(f"add: shapes differ {lhs.shape} vs {rhs.shape}")
    return (lhs.astype(np.float32) + rhs.astype(np.float32)).astype(np.float32)
