"""Cheap image descriptors used by the proactive predictor.

All kernels work on the image interior so no border convention leaks into
the numbers: Sobel responses exist for pixels with a full 3x3 neighbourhood,
and the Harris structure tensor sums over a zero-padded 3x3 window of those.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .core import DegenerateImage

GLCM_LEVELS = 8
HOG_BINS = 8

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()
# |gx| and |gy| are each at most 4 * 255
MAX_SOBEL_MAGNITUDE = 4 * 255 * math.sqrt(2)

FEATURE_NAMES = (
    ["mean", "variance"]
    + ["glcm_contrast", "glcm_dissimilarity", "glcm_homogeneity", "glcm_asm", "glcm_energy", "glcm_correlation"]
    + ["n_peaks", "n_corners", "n_edge_pixels", "aspect_ratio"]
    + [f"hue_hist_{i}" for i in range(4)]
    + [f"sat_hist_{i}" for i in range(4)]
    + [f"brightness_hist_{i}" for i in range(4)]
    + [f"{c}_hist_{i}" for c in "rgb" for i in range(8)]
    + [f"hog_{i}" for i in range(HOG_BINS)]
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureConfig:
    edge_fraction: float = 0.25
    peak_fraction: float = 0.5
    harris_k: float = 0.04
    harris_fraction: float = 0.01

    @classmethod
    def from_mapping(cls, values: dict) -> "FeatureConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown feature settings: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items()})


class RasterImage:
    """8-bit RGB raster, stored as an ``(height, width, 3)`` uint8 array."""

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] * arr.shape[1] == 0:
            raise ValueError("raster has no pixels")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("pixel values must lie in 0..255")
            arr = arr.astype(np.uint8)
        self.pixels = arr
        self.pixels.flags.writeable = False

    @classmethod
    def from_buffer(cls, width: int, height: int, data: bytes) -> "RasterImage":
        if width * height <= 0 or len(data) != 3 * width * height:
            raise ValueError(f"buffer of {len(data)} bytes does not hold {width}x{height} RGB")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3))

    @classmethod
    def open(cls, path) -> "RasterImage":
        from PIL import Image

        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def to_grayscale(img: RasterImage) -> np.ndarray:
    """Rounded BT.601 luma, computed in integers."""
    rgb = img.pixels.astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def _require(gray: np.ndarray, min_h: int, min_w: int) -> None:
    if gray.shape[0] < min_h or gray.shape[1] < min_w:
        raise DegenerateImage(f"image {gray.shape[1]}x{gray.shape[0]} is smaller than {min_w}x{min_h}")


def glcm_matrix(gray: np.ndarray) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix for the (right, 0) offset."""
    _require(gray, 1, 2)
    q = gray.astype(np.int64) * GLCM_LEVELS // 256
    left, right = q[:, :-1].ravel(), q[:, 1:].ravel()
    counts = np.bincount(left * GLCM_LEVELS + right, minlength=GLCM_LEVELS**2).reshape(GLCM_LEVELS, GLCM_LEVELS)
    counts = counts + counts.T
    return counts / counts.sum()


def glcm_features(gray: np.ndarray) -> np.ndarray:
    """contrast, dissimilarity, homogeneity, ASM, energy, correlation."""
    p = glcm_matrix(gray)
    i, j = np.indices(p.shape, dtype=np.float64)
    diff = i - j
    contrast = float((p * diff**2).sum())
    dissimilarity = float((p * np.abs(diff)).sum())
    homogeneity = float((p / (1.0 + diff**2)).sum())
    asm = float((p**2).sum())
    mu_i = float((i * p).sum())
    mu_j = float((j * p).sum())
    sd_i = math.sqrt(float(((i - mu_i) ** 2 * p).sum()))
    sd_j = math.sqrt(float(((j - mu_j) ** 2 * p).sum()))
    if sd_i * sd_j == 0:
        correlation = 1.0
    else:
        correlation = float(((i - mu_i) * (j - mu_j) * p).sum()) / (sd_i * sd_j)
    return np.array([contrast, dissimilarity, homogeneity, asm, math.sqrt(asm), correlation])


def _hsv(img: RasterImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = img.pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    return hue, sat, mx


def _normalized_hist(bins: np.ndarray, n: int) -> np.ndarray:
    counts = np.bincount(bins.ravel(), minlength=n).astype(np.float64)
    return counts / counts.sum()


def histogram_features(img: RasterImage) -> np.ndarray:
    """hue/sat/brightness (4 bins each) then R/G/B (8 bins each), L1-normalized."""
    hue, sat, val = _hsv(img)
    out = [
        _normalized_hist(np.minimum((hue / 90.0).astype(np.int64), 3), 4),
        _normalized_hist(np.minimum((sat * 4).astype(np.int64), 3), 4),
        _normalized_hist(np.minimum((val * 4).astype(np.int64), 3), 4),
    ]
    for c in range(3):
        out.append(_normalized_hist(img.pixels[..., c].astype(np.int64) * 8 // 256, 8))
    return np.concatenate(out)


def _correlate3(a: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode 3x3 cross-correlation."""
    h, w = a.shape
    out = np.zeros((h - 2, w - 2))
    for dy in range(3):
        for dx in range(3):
            if kernel[dy, dx]:
                out += kernel[dy, dx] * a[dy : dy + h - 2, dx : dx + w - 2]
    return out


def sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _require(gray, 3, 3)
    g = gray.astype(np.float64)
    return _correlate3(g, SOBEL_X), _correlate3(g, SOBEL_Y)


def orientation_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    theta = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    return np.minimum((theta / (180.0 / HOG_BINS)).astype(np.int64), HOG_BINS - 1)


def gradient_features(gray: np.ndarray, config: FeatureConfig = FeatureConfig()) -> tuple[int, np.ndarray]:
    """Edge-pixel count and an 8-bin magnitude-weighted orientation histogram."""
    gx, gy = sobel(gray)
    mag = np.hypot(gx, gy)
    n_edges = int((mag > config.edge_fraction * MAX_SOBEL_MAGNITUDE).sum())
    hist = np.bincount(orientation_bins(gx, gy).ravel(), weights=mag.ravel(), minlength=HOG_BINS)
    total = hist.sum()
    if total == 0:
        return n_edges, np.full(HOG_BINS, 1.0 / HOG_BINS)
    return n_edges, hist / total


def _is_local_max(a: np.ndarray) -> np.ndarray:
    """Strict 3x3 maximum, with plateaus resolved toward the first pixel in raster order.

    A pixel wins if it is > every neighbour visited before it (rows above, left
    on the same row) and >= every neighbour after it; for a plateau this keeps
    exactly one pixel per connected tie.
    """
    h, w = a.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = a
    keep = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
            before = dy < 0 or (dy == 0 and dx < 0)
            keep &= (a > nb) if before else (a >= nb)
    return keep


def count_peaks(gray: np.ndarray, config: FeatureConfig = FeatureConfig()) -> int:
    """Pixels strictly brighter than all 8 neighbours and at least ``peak_fraction * 255``."""
    _require(gray, 3, 3)
    g = gray.astype(np.float64)
    h, w = g.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = g
    strict = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                strict &= g > padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return int((strict & (g >= config.peak_fraction * 255)).sum())


def harris_response(gray: np.ndarray, k: float = 0.04) -> np.ndarray:
    gx, gy = sobel(gray)
    h, w = gx.shape

    def window_sum(a):
        padded = np.zeros((h + 2, w + 2))
        padded[1:-1, 1:-1] = a
        return _correlate3(padded, np.ones((3, 3)))

    sxx, syy, sxy = window_sum(gx * gx), window_sum(gy * gy), window_sum(gx * gy)
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def count_corners(gray: np.ndarray, config: FeatureConfig = FeatureConfig()) -> int:
    """Harris responses above ``harris_fraction * max`` that are 3x3 local maxima."""
    r = harris_response(gray, config.harris_k)
    top = r.max()
    if top <= 0:
        return 0
    return int((_is_local_max(r) & (r > config.harris_fraction * top)).sum())


def extract_all(
    img: RasterImage, config: FeatureConfig = FeatureConfig(), timings: Optional[dict] = None
) -> np.ndarray:
    """The full 56-value descriptor in ``FEATURE_NAMES`` order.

    When ``timings`` is a dict, seconds spent per feature group are added to it.
    """
    clock = time.perf_counter
    gray = to_grayscale(img)
    _require(gray, 3, 3)
    parts = {}

    def timed(name, fn):
        t0 = clock()
        parts[name] = fn()
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + clock() - t0

    g = gray.astype(np.float64)
    timed("moments", lambda: np.array([g.mean(), g.var()]))
    timed("glcm", lambda: glcm_features(gray))
    timed("peaks", lambda: count_peaks(gray, config))
    timed("corners", lambda: count_corners(gray, config))
    timed("gradients", lambda: gradient_features(gray, config))
    timed("histograms", lambda: histogram_features(img))
    n_edges, hog = parts["gradients"]
    return np.concatenate(
        [
            parts["moments"],
            parts["glcm"],
            [parts["peaks"], parts["corners"], n_edges, img.width / img.height],
            parts["histograms"],
            hog,
        ]
    ).astype(np.float64)
