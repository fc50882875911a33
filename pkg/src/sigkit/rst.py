"""Rotation, translation and scale correction of a probe against a reference.

The rotation search rotates the probe back by every candidate angle, crops
each candidate to its ink box and compares it with the reference's ink box in
a fixed square frame using the correlation coefficient. A coarse 5 degree
sweep over [-60, 60] is refined at 1 degree steps around the best coarse hit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConstantImage, DegenerateRange, DimensionMismatch
from .imagecore import INK_THRESHOLD, GrayImage, crop, ink_bbox, resize, rotate
from .validation import check_image, check_is_fitted_attr

logger = logging.getLogger(__name__)

ANGLE_LIMIT = 60
COARSE_STEP = 5
FINE_RADIUS = 3
FRAME_SIZE = 64
# probes lighter than this many fully dark pixels are upsampled before the
# search so small signatures are not rotated at a coarse resolution
MIN_INK_MASS = 2000.0


@dataclass(frozen=True)
class CorrelationProfile:
    angles: list[float]
    scores: list[float]
    raw: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if len(self.angles) != len(self.scores):
            raise ValueError("angles and scores differ in length")


@dataclass(frozen=True)
class RstParams:
    rotation_deg: float
    translation_x: int
    translation_y: int
    scale_ratio: float
    profile: CorrelationProfile | None = field(default=None, compare=False)

    def __post_init__(self):
        if not -ANGLE_LIMIT <= self.rotation_deg <= ANGLE_LIMIT:
            raise ValueError(f"rotation {self.rotation_deg} outside [-60, 60]")
        if not (np.isfinite(self.scale_ratio) and self.scale_ratio > 0):
            raise ValueError(f"scale ratio must be positive and finite, got {self.scale_ratio}")

    @property
    def detected_scale(self) -> float:
        """Scale applied to the probe relative to the reference (1 / ratio)."""
        return 1.0 / self.scale_ratio


def _as_real(img) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.to_float()
    return np.asarray(img, dtype=np.float64)


def ncc(p, q) -> float:
    """Correlation coefficient of two equally sized rasters.

    Accepts GrayImage or real-valued arrays; the latter keeps the computation
    free of byte quantization.
    """
    p = _as_real(p)
    q = _as_real(q)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    dp = p - p.mean()
    dq = q - q.mean()
    spp = np.sum(dp * dp)
    sqq = np.sum(dq * dq)
    if spp == 0.0 or sqq == 0.0:
        raise ConstantImage("correlation undefined for a constant-intensity raster")
    return float(np.sum(dp * dq) / np.sqrt(spp * sqq))


def minmax_normalize(xs) -> list[float]:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1 or xs.size < 2:
        raise ValueError("need at least two values")
    lo, hi = xs.min(), xs.max()
    if not hi > lo:
        raise DegenerateRange(f"all {xs.size} values equal {lo}")
    return ((xs - lo) / (hi - lo)).tolist()


def comparison_frame(img: GrayImage, size: int = FRAME_SIZE,
                     threshold: int = INK_THRESHOLD) -> np.ndarray:
    """Ink-box crop of ``img`` resampled to a ``size`` x ``size`` real raster."""
    return resize(crop(img, ink_bbox(img, threshold)), size, size).to_float()


class ProbeFrames:
    """Memoized comparison frames of a probe rotated back by candidate angles.

    The frames depend only on the probe, so one instance can be shared by
    rotation searches against many references.
    """

    def __init__(self, probe: GrayImage, size: int = FRAME_SIZE,
                 threshold: int = INK_THRESHOLD, min_ink_mass: float = MIN_INK_MASS):
        self.probe = probe
        self.size = size
        self.threshold = threshold
        self.upsample = max(1.0, np.sqrt(min_ink_mass / max(ink_mass(probe), 1e-9)))
        if self.upsample > 1.0:
            self.search_image = resize(probe, round(probe.width * self.upsample),
                                       round(probe.height * self.upsample))
        else:
            self.search_image = probe
        self._frames: dict[int, np.ndarray] = {}
        self._rotated: dict[int, GrayImage] = {}

    def rotated(self, angle: int) -> GrayImage:
        """The probe rotated by ``-angle`` (undoing a rotation of ``angle``)."""
        if angle not in self._rotated:
            self._rotated[angle] = rotate(self.probe, -angle)
        return self._rotated[angle]

    def frame(self, angle: int) -> np.ndarray:
        """Zero-mean, unit-norm comparison frame, flattened."""
        if angle not in self._frames:
            self._frames[angle] = unit_frame(comparison_frame(
                rotate(self.search_image, -angle), self.size, self.threshold))
        return self._frames[angle]


def unit_frame(frame: np.ndarray) -> np.ndarray:
    """Centered, unit-norm copy; the dot product of two is their ``ncc``."""
    d = np.asarray(frame, dtype=np.float64).ravel()
    d = d - d.mean()
    norm = np.sqrt(np.sum(d * d))
    if norm == 0.0:
        raise ConstantImage("correlation undefined for a constant-intensity raster")
    return d / norm


def ink_mass(img: GrayImage) -> float:
    """Total darkness in units of fully black pixels; scales with area."""
    return float(np.sum(255 - img.pixels.astype(np.int64))) / 255.0


def _argmax_small_angle(angles, scores) -> int:
    # highest score; ties go to the smaller |angle|, then the negative one
    best = max(range(len(angles)), key=lambda i: (scores[i], -abs(angles[i]), -angles[i]))
    return best


def search_rotation(ref_frame: np.ndarray, frames: ProbeFrames,
                    limit: int = ANGLE_LIMIT, step: int = COARSE_STEP,
                    radius: int = FINE_RADIUS) -> tuple[int, CorrelationProfile]:
    """Coarse-to-fine angle search of ``frames`` against a reference frame."""
    ref = unit_frame(ref_frame)
    if ref.size != frames.size * frames.size:
        raise DimensionMismatch(f"reference frame has {ref.size} pixels, probe frames {frames.size}^2")
    coarse = list(range(-limit, limit + 1, step))
    raw = [float(ref @ frames.frame(a)) for a in coarse]
    center = coarse[_argmax_small_angle(coarse, raw)]

    fine = list(range(center - radius, center + radius + 1))
    fine_scores = [float(ref @ frames.frame(a)) for a in fine]
    angle = fine[_argmax_small_angle(fine, fine_scores)]
    angle = int(np.clip(angle, -limit, limit))

    try:
        scores = minmax_normalize(raw)
    except DegenerateRange:
        scores = [0.0] * len(raw)
    return angle, CorrelationProfile([float(a) for a in coarse], scores, raw)


def estimate_rotation(reference: GrayImage, probe: GrayImage, *,
                      frame_size: int = FRAME_SIZE,
                      threshold: int = INK_THRESHOLD) -> tuple[int, CorrelationProfile]:
    """Angle (degrees, counter-clockwise) by which ``probe`` is rotated
    relative to ``reference``, plus the normalized coarse profile."""
    ref_frame = comparison_frame(reference, frame_size, threshold)
    return search_rotation(ref_frame, ProbeFrames(probe, frame_size, threshold))


def remove_translation(img: GrayImage, threshold: int = INK_THRESHOLD
                       ) -> tuple[GrayImage, int, int]:
    """Tight ink crop plus the blank column count on the left (X translation)
    and the blank row count at the bottom (Y translation)."""
    box = ink_bbox(img, threshold)
    return crop(img, box), box.left, img.height - 1 - box.bottom


def estimate_scale(reference_cropped: GrayImage, probe_cropped: GrayImage) -> float:
    """Height ratio reference / probe of two tight crops."""
    ratio = reference_cropped.height / probe_cropped.height
    logger.debug("scale: height ratio %.4f, width ratio %.4f (unused)",
                 ratio, reference_cropped.width / probe_cropped.width)
    return ratio


@dataclass(frozen=True, eq=False)
class Reference:
    """A reference signature with its tight crop and comparison frame."""

    image: GrayImage
    cropped: GrayImage
    frame: np.ndarray

    @classmethod
    def build(cls, image: GrayImage, frame_size: int = FRAME_SIZE,
              threshold: int = INK_THRESHOLD) -> Reference:
        cropped, _, _ = remove_translation(image, threshold)
        return cls(image, cropped, resize(cropped, frame_size, frame_size).to_float())


def correct_rst(reference: GrayImage | Reference, probe: GrayImage, *,
                frame_size: int = FRAME_SIZE, threshold: int = INK_THRESHOLD,
                frames: ProbeFrames | None = None) -> tuple[GrayImage, RstParams]:
    """Undo rotation, then translation, then scale of ``probe``.

    The aligned probe always has the dimensions of the reference's tight crop.
    Passing a prebuilt ``Reference`` and ``ProbeFrames`` lets callers reuse
    the rotation work when one probe meets many references.
    """
    if not isinstance(reference, Reference):
        reference = Reference.build(reference, frame_size, threshold)
    if frames is None:
        frames = ProbeFrames(probe, frame_size, threshold)
    angle, profile = search_rotation(reference.frame, frames)
    derotated = frames.rotated(angle)

    ref_crop = reference.cropped
    probe_crop, tx, ty = remove_translation(derotated, threshold)
    ratio = estimate_scale(ref_crop, probe_crop)
    aligned = resize(probe_crop, ref_crop.width, ref_crop.height)
    return aligned, RstParams(float(angle), tx, ty, ratio, profile)


class RstCorrector(TransformerMixin, BaseEstimator):
    """Aligns probe signatures to a single reference signature.

    ``fit`` takes the reference (a GrayImage, or a one-element sequence of
    them); ``transform`` maps a sequence of probes to aligned images, and the
    detected parameters of the last call are kept in ``params_``.
    """

    def __init__(self, frame_size=FRAME_SIZE, threshold=INK_THRESHOLD):
        self.frame_size = frame_size
        self.threshold = threshold

    def fit(self, X, y=None):
        ref = X if isinstance(X, GrayImage) else _single(X)
        ref = check_image(ref, require_ink=True, threshold=self.threshold)
        self.reference_ = Reference.build(ref, self.frame_size, self.threshold)
        return self

    def transform(self, X):
        check_is_fitted_attr(self, "reference_")
        probes = [X] if isinstance(X, GrayImage) else list(X)
        aligned, params = [], []
        for probe in probes:
            probe = check_image(probe, require_ink=True, threshold=self.threshold)
            out, p = correct_rst(self.reference_, probe, frame_size=self.frame_size,
                                 threshold=self.threshold)
            aligned.append(out)
            params.append(p)
        self.params_ = params
        return aligned


def _single(X):
    items = list(X)
    if len(items) != 1:
        raise ValueError(f"expected exactly one reference image, got {len(items)}")
    return items[0]
