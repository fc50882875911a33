"""Grayscale rasters, PGM/PNG file I/O and the geometric primitives used by
every later stage (rotate, ink box, crop, resize).

Images are dark ink on a light background: 0 is black ink, 255 is white.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FileNotFound, IoFailure, MalformedImage, NoInk, OutOfBounds

BACKGROUND = 255
INK_THRESHOLD = 128

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
# magic, width, height, maxval, then exactly one whitespace byte
_PGM_HEADER = re.compile(
    rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s"
)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit grayscale raster stored row-major as ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError("pixel values must be finite")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @classmethod
    def from_real(cls, values) -> GrayImage:
        """Round and clamp a real-valued raster into 8-bit pixels."""
        values = np.asarray(values, dtype=float)
        return cls(np.clip(np.rint(values), 0, 255).astype(np.uint8))

    @classmethod
    def blank(cls, width: int, height: int, value: int = BACKGROUND) -> GrayImage:
        return cls(np.full((height, width), value, dtype=np.uint8))

    def to_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"GrayImage(width={self.width}, height={self.height})"


@dataclass(frozen=True)
class InkBox:
    """Inclusive pixel bounds of the ink."""

    left: int
    top: int
    right: int
    bottom: int

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    @property
    def height(self) -> int:
        return self.bottom - self.top + 1

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)


def load_image(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) or an 8-bit grayscale PNG."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FileNotFound(f"no such file: {path}") from None
    except IsADirectoryError:
        raise FileNotFound(f"not a file: {path}") from None
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if data.startswith(_PNG_MAGIC):
        return _decode_png(path)
    return _decode_pgm(data, path)


def _decode_pgm(data: bytes, path) -> GrayImage:
    if not data:
        raise MalformedImage(f"{path}: empty file")
    if not data.startswith(b"P5"):
        raise MalformedImage(f"{path}: bad magic {data[:2]!r}, expected P5")
    m = _PGM_HEADER.match(data)
    if m is None:
        raise MalformedImage(f"{path}: malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    if width < 1 or height < 1:
        raise MalformedImage(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedImage(f"{path}: maxval {maxval} unsupported, expected 255")
    payload = data[m.end():]
    n = width * height
    if len(payload) < n:
        raise MalformedImage(f"{path}: truncated payload ({len(payload)} of {n} bytes)")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=n).reshape(height, width)
    return GrayImage(pixels)


def _decode_png(path) -> GrayImage:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "L":
                raise MalformedImage(
                    f"{path}: PNG mode {im.mode!r} is not 8-bit grayscale without alpha"
                )
            return GrayImage(np.asarray(im))
    except MalformedImage:
        raise
    except Exception as exc:  # PIL raises a zoo of types for corrupt files
        raise MalformedImage(f"{path}: {exc}") from exc


def encode_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def save_image(img: GrayImage, path) -> None:
    """Write the canonical P5 form: ``P5\\n<w> <h>\\n255\\n`` then raw bytes."""
    path = Path(path)
    try:
        path.write_bytes(encode_pgm(img))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def rotate(img: GrayImage, angle: float) -> GrayImage:
    """Rotate counter-clockwise by ``angle`` degrees onto an expanded canvas.

    Bilinear interpolation; uncovered pixels are filled with the background.
    """
    angle = float(angle)
    if not np.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    if angle % 360.0 == 0.0:
        return img
    out = Image.fromarray(img.pixels).rotate(
        angle, resample=Image.BILINEAR, expand=True, fillcolor=BACKGROUND
    )
    return GrayImage(np.asarray(out))


def ink_mask(img: GrayImage, threshold: int = INK_THRESHOLD) -> np.ndarray:
    return img.pixels < threshold


def ink_bbox(img: GrayImage, threshold: int = INK_THRESHOLD) -> InkBox:
    """Tightest box around every pixel strictly darker than ``threshold``."""
    mask = ink_mask(img, threshold)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise NoInk(f"no pixel below intensity {threshold} in {img!r}")
    cols = np.flatnonzero(mask.any(axis=0))
    return InkBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def crop(img: GrayImage, box: InkBox) -> GrayImage:
    if not (0 <= box.left <= box.right < img.width and 0 <= box.top <= box.bottom < img.height):
        raise OutOfBounds(f"{box} does not fit inside {img!r}")
    return GrayImage(img.pixels[box.top:box.bottom + 1, box.left:box.right + 1])


def resize(img: GrayImage, new_width: int, new_height: int) -> GrayImage:
    """Bilinear resampling to exactly ``new_width`` x ``new_height``.

    When shrinking, the triangle kernel widens with the reduction factor so
    thin strokes are averaged rather than skipped.
    """
    new_width, new_height = int(new_width), int(new_height)
    if new_width < 1 or new_height < 1:
        raise ValueError(f"target size must be at least 1x1, got {new_width}x{new_height}")
    if (new_width, new_height) == (img.width, img.height):
        return img
    out = Image.fromarray(img.pixels).resize((new_width, new_height), Image.BILINEAR)
    return GrayImage(np.asarray(out))


def paste(canvas: np.ndarray, patch: np.ndarray, left: int, top: int) -> None:
    """Darken-composite ``patch`` onto ``canvas`` in place (minimum wins)."""
    h, w = patch.shape
    region = canvas[top:top + h, left:left + w]
    np.minimum(region, patch, out=region)
