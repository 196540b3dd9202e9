"""Image I/O (binary PPM), resizing, tensor conversion and synthetic seeds."""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from seedpure.errors import MalformedHeaderError, UnsupportedFormatError, TruncatedFileError

IMAGE_SUFFIXES = (".ppm",)


class TruncatedPixelDataError(TruncatedFileError):
    pass


@dataclass(frozen=True)
class Image:
    height: int
    width: int
    pixels: np.ndarray  # uint8, (height, width, 3), interleaved RGB

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if self.pixels.dtype != np.uint8 or self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer must be uint8 ({self.height}, {self.width}, 3), "
                f"got {self.pixels.dtype} {self.pixels.shape}")

    @classmethod
    def from_array(cls, arr) -> "Image":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(arr.shape[0], arr.shape[1], arr)

    def __eq__(self, other):
        return (isinstance(other, Image) and self.height == other.height
                and self.width == other.width and np.array_equal(self.pixels, other.pixels))


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes) -> Image:
    if data[:2] != b"P6":
        raise UnsupportedFormatError("only binary PPM (P6) images are supported")
    pos = 2
    fields = []
    for what in ("width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None or not m.group(1).isdigit():
            raise MalformedHeaderError(f"PPM header: bad or missing {what}")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"PPM header: non-positive size {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"PPM maxval {maxval} unsupported (need 255)")
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeaderError("PPM header: missing whitespace before pixel data")
    pos += 1
    need = 3 * width * height
    body = data[pos:pos + need]
    if len(body) < need:
        raise TruncatedPixelDataError(
            f"PPM pixel data truncated: {len(body)} of {need} bytes")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()
    return Image(height, width, pixels)


def encode_ppm(img: Image) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def write_image(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def list_images(directory) -> List[Path]:
    """Image files in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    if (out_h, out_w) == (img.height, img.width):
        return Image(img.height, img.width, img.pixels.copy())
    src = img.pixels.astype(np.float64)
    y0, y1, fy = _axis_weights(img.height, out_h)
    x0, x1, fx = _axis_weights(img.width, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return Image(out_h, out_w, out)


def to_tensor(img: Image, mean: Optional[Sequence[float]] = None,
              std: Optional[Sequence[float]] = None) -> np.ndarray:
    """(1, 3, H, W) float32 with values pixel / 255, optionally normalized."""
    x = img.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0
    if mean is not None or std is not None:
        m = np.broadcast_to(np.asarray(0.0 if mean is None else mean, dtype=np.float64), (3,))
        s = np.broadcast_to(np.asarray(1.0 if std is None else std, dtype=np.float64), (3,))
        x = (x - m[:, None, None]) / s[:, None, None]
    return np.ascontiguousarray(x[None], dtype=np.float32)


def prepare(path, geometry: Tuple[int, int, int], mean=None, std=None) -> np.ndarray:
    """Load, resize to the model geometry and convert to a (1, 3, H, W) tensor."""
    img = load_image(path)
    _, h, w = geometry
    if (img.height, img.width) != (h, w):
        img = resize_bilinear(img, h, w)
    return to_tensor(img, mean, std)


@dataclass(frozen=True)
class SynthSpec:
    class_id: int
    base_color: Tuple[int, int, int]
    texture_frequency: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.texture_frequency < 0:
            raise ValueError("texture_frequency must be >= 0")
        if not 0 <= self.noise_std <= 1:
            raise ValueError("noise_std must lie in [0, 1]")


BACKGROUND = 16.0
TEXTURE_AMPLITUDE = 0.15


def gen_synthetic(spec: SynthSpec, h: int, w: int) -> Image:
    """A dark frame with a textured, noisy ellipse standing in for a seed.

    The ellipse centre, axes and tilt jitter with ``spec.seed``; with zero
    noise and zero texture frequency its fill is exactly ``base_color``.
    """
    if h < 8 or w < 8:
        raise ValueError("synthetic images need h, w >= 8")
    rng = np.random.default_rng(int(spec.seed) & 0xFFFFFFFFFFFFFFFF)
    cy = (h - 1) / 2 + rng.uniform(-0.05, 0.05) * h
    cx = (w - 1) / 2 + rng.uniform(-0.05, 0.05) * w
    ay = h * rng.uniform(0.30, 0.42)
    ax = w * rng.uniform(0.36, 0.46)
    tilt = rng.uniform(-0.15, 0.15)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(tilt) + dy * np.sin(tilt)
    v = -dx * np.sin(tilt) + dy * np.cos(tilt)
    inside = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0

    base = np.asarray(spec.base_color, dtype=np.float64)
    texture = 1.0 + TEXTURE_AMPLITUDE * np.sin(2 * np.pi * spec.texture_frequency * u)
    out = np.full((h, w, 3), BACKGROUND)
    out[inside] = base[None, :] * texture[inside][:, None]
    if spec.noise_std > 0:
        out += rng.normal(0.0, spec.noise_std * 255.0, size=out.shape)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return Image(h, w, out)


DEFAULT_SYNTH_CLASSES = (
    {"name": "variety_a", "base_color": (180, 160, 120), "texture_frequency": 0.05,
     "noise_std": 0.08},
    {"name": "variety_b", "base_color": (120, 160, 180), "texture_frequency": 0.08,
     "noise_std": 0.08},
)


def image_seed(master: int, class_index: int, image_index: int) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, class_index, image_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def write_synthetic_dataset(out_dir, per_class: int, seed: int, classes=DEFAULT_SYNTH_CLASSES,
                            height: int = 75, width: int = 170) -> List[Path]:
    """One sub-directory per class, ``per_class`` PPM images each."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    out_dir = Path(out_dir)
    dirs = []
    for ci, cls in enumerate(classes):
        d = out_dir / cls["name"]
        os.makedirs(d, exist_ok=True)
        for i in range(per_class):
            spec = SynthSpec(
                class_id=ci,
                base_color=tuple(int(c) for c in cls["base_color"]),
                texture_frequency=float(cls.get("texture_frequency", 0.0)),
                noise_std=float(cls.get("noise_std", 0.0)),
                seed=image_seed(seed, ci, i),
            )
            write_image(gen_synthetic(spec, height, width), d / f"{cls['name']}_{i:05d}.ppm")
        dirs.append(d)
    return dirs
