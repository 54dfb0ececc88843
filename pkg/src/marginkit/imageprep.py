"""Hand-image vectorisation: Otsu segmentation, crop and centre on a square
canvas, bilinear resize to 32x32, and flattening to 1024 values in [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SIDE = 32


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale image; ``pixels`` is a ``(height, width)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-d array")
        if np.any(px < 0) or np.any(px > 255) or not np.all(px == np.round(px)):
            raise ValueError("pixels must be integers in [0, 255]")
        object.__setattr__(self, "pixels", px.astype(np.uint8))

    @classmethod
    def from_flat(cls, width: int, height: int, pixels) -> "GrayImage":
        px = np.asarray(pixels)
        if px.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {px.size}")
        return cls(px.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def between_class_variance(hist) -> np.ndarray:
    """Between-class variance for every threshold t (foreground = level > t)."""
    hist = np.asarray(hist, dtype=float)
    levels = np.arange(len(hist))
    total = hist.sum()
    w0 = np.cumsum(hist) / total
    w1 = 1.0 - w0
    mu_t = np.cumsum(hist * levels) / total
    mu = mu_t[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sb = (mu * w0 - mu_t) ** 2 / (w0 * w1)
    return np.where((w0 > 0) & (w1 > 0), sb, -np.inf)


def otsu_threshold(img: GrayImage) -> int:
    """Threshold maximising between-class variance; ties go to the smallest t."""
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise ValueError("constant image: Otsu needs at least two gray levels")
    # exact comparison: N^2 * sigma_b^2 = (S n0 - N s0)^2 / (n0 (N - n0))
    counts = [int(v) for v in hist]
    N = sum(counts)
    S = sum(k * v for k, v in enumerate(counts))
    best_t, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += counts[t]
        s0 += t * counts[t]
        if n0 == 0 or n0 == N:
            continue
        num = (S * n0 - N * s0) ** 2
        den = n0 * (N - n0)
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def crop_and_center(img: GrayImage, threshold: int, invert: bool = False) -> GrayImage:
    """Tight bounding box of the foreground, centred on a zero-filled square canvas.

    Foreground is ``pixel > threshold`` (``pixel <= threshold`` with ``invert``).
    """
    px = img.pixels
    fg = px <= threshold if invert else px > threshold
    if not fg.any():
        raise ValueError("no foreground pixels above the threshold")
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    box = px[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    h, w = box.shape
    side = max(h, w)
    canvas = np.zeros((side, side), dtype=np.uint8)
    top, left = (side - h) // 2, (side - w) // 2
    canvas[top:top + h, left:left + w] = box
    return GrayImage(canvas)


def _bilinear_axis(src: int, dst: int):
    """Source indices and weights for pixel-centre aligned resampling."""
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_to_32(img: GrayImage) -> GrayImage:
    """Bilinear resize of a square image to 32x32, rounded half up."""
    if img.width != img.height:
        raise ValueError("resize_to_32 expects a square image")
    src = img.pixels.astype(float)
    n = img.width
    if n == SIDE:
        return img
    lo, hi, frac = _bilinear_axis(n, SIDE)
    top = src[lo][:, lo] * (1 - frac)[None, :] + src[lo][:, hi] * frac[None, :]
    bottom = src[hi][:, lo] * (1 - frac)[None, :] + src[hi][:, hi] * frac[None, :]
    out = top * (1 - frac)[:, None] + bottom * frac[:, None]
    return GrayImage(np.clip(np.floor(out + 0.5), 0, 255))


def vectorize(img: GrayImage) -> np.ndarray:
    if img.pixels.shape != (SIDE, SIDE):
        raise ValueError(f"vectorize expects a {SIDE}x{SIDE} image, got {img.pixels.shape}")
    return img.pixels.astype(float).ravel() / 255.0


def preprocess(img: GrayImage, invert: bool = False) -> np.ndarray:
    """Full pipeline from raw grayscale image to a 1024-vector."""
    t = otsu_threshold(img)
    return vectorize(resize_to_32(crop_and_center(img, t, invert=invert)))


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        magic = fh.read(2)
    with Image.open(path) as im:
        if magic != b"P5" or im.mode != "L":
            raise ValueError(f"{path}: expected an 8-bit binary PGM (P5) image")
        return GrayImage(np.array(im))


def write_pgm(img: GrayImage, path) -> None:
    Image.fromarray(img.pixels).save(Path(path), format="PPM")
