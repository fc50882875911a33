"""Orthonormal 2-D DCT and the 64-value signature descriptor.

The descriptor resamples an aligned signature to 64x64, transforms it, keeps
the 8x8 low-frequency corner in zig-zag order and min-max scales the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import BlockTooLarge
from .imagecore import INK_THRESHOLD, GrayImage, ink_bbox, resize
from .rst import minmax_normalize
from .validation import check_images

N_FEATURES = 64


@dataclass(frozen=True, eq=False)
class DctCoeffs:
    """Coefficient grid, row-major ``(height, width)`` like the source image."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"expected a non-empty 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    source_id: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("features must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis: row k is alpha(k) cos(pi (2x+1) k / 2n)."""
    x = np.arange(n)
    k = x[:, None]
    m = np.cos(np.pi * (2 * x[None, :] + 1) * k / (2 * n))
    m[0] *= np.sqrt(1.0 / n)
    m[1:] *= np.sqrt(2.0 / n)
    m.setflags(write=False)
    return m


def dct2(img) -> DctCoeffs:
    """Separable orthonormal DCT-II of a GrayImage or real-valued raster."""
    f = img.to_float() if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    if f.ndim != 2 or f.size == 0:
        raise ValueError(f"expected a non-empty 2-D raster, got shape {f.shape}")
    rows, cols = f.shape
    return DctCoeffs(dct_matrix(rows) @ f @ dct_matrix(cols).T)


def idct2(coeffs) -> np.ndarray:
    c = coeffs.values if isinstance(coeffs, DctCoeffs) else np.asarray(coeffs, dtype=np.float64)
    rows, cols = c.shape
    return dct_matrix(rows).T @ c @ dct_matrix(cols)


@lru_cache(maxsize=16)
def zigzag_indices(k: int) -> tuple[tuple[int, int], ...]:
    """JPEG zig-zag traversal of a k x k block as (row, col) pairs."""
    order = []
    for s in range(2 * k - 1):
        lo, hi = max(0, s - k + 1), min(s, k - 1)
        rows = range(lo, hi + 1) if s % 2 else range(hi, lo - 1, -1)
        order.extend((r, s - r) for r in rows)
    return tuple(order)


def zigzag_block(coeffs, k: int) -> list[float]:
    values = coeffs.values if isinstance(coeffs, DctCoeffs) else np.asarray(coeffs)
    if k < 1 or k > values.shape[0] or k > values.shape[1]:
        raise BlockTooLarge(f"{k}x{k} block does not fit a {values.shape[1]}x{values.shape[0]} grid")
    return [float(values[r, c]) for r, c in zigzag_indices(k)]


def extract_features(aligned: GrayImage, *, mode: str = "dct", size: int = 64,
                     block: int = 8, threshold: int = INK_THRESHOLD,
                     source_id: str | None = None) -> FeatureVector:
    """64 min-max scaled values describing an aligned signature.

    ``mode="dct"`` keeps the low-frequency DCT block of a ``size`` x ``size``
    resample; ``mode="pixels"`` uses the raw intensities of a ``block`` x
    ``block`` resample instead.
    """
    ink_bbox(aligned, threshold)
    if mode == "dct":
        raw = zigzag_block(dct2(resize(aligned, size, size)), block)
    elif mode == "pixels":
        raw = resize(aligned, block, block).to_float().ravel()
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    return FeatureVector(minmax_normalize(raw), source_id)


class DctFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from aligned images to an ``(n, 64)`` matrix."""

    def __init__(self, mode="dct", size=64, block=8, threshold=INK_THRESHOLD):
        self.mode = mode
        self.size = size
        self.block = block
        self.threshold = threshold

    def fit(self, X, y=None):
        if self.block * self.block != N_FEATURES:
            raise ValueError(f"block must be 8 to give {N_FEATURES} features, got {self.block}")
        if self.mode not in ("dct", "pixels"):
            raise ValueError(f"unknown feature mode {self.mode!r}")
        return self

    def transform(self, X):
        images = check_images(X)
        return np.vstack([
            extract_features(im, mode=self.mode, size=self.size, block=self.block,
                             threshold=self.threshold).values
            for im in images
        ])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
