"""Synthetic signatures with ground-truth distortions, and gallery enrollment.

A subject is a seed. Its signature is a handful of smooth pen strokes laid out
left to right; every sample of the same subject perturbs the stroke control
points by a few pixels, the way repeated signatures of one person differ.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyDirectory, FileNotFound, InkClipped, SigkitError
from .features import FeatureVector, extract_features
from .imagecore import (
    BACKGROUND,
    GrayImage,
    atomic_write_bytes,
    crop,
    ink_bbox,
    load_image,
    resize,
    rotate,
    save_image,
)
from .rst import remove_translation

logger = logging.getLogger(__name__)

SUPERSAMPLE = 4
JITTER_PX = 3.0
INK_LEVEL = 25
PEN_RADIUS = 1.6
MARGIN = 14


@dataclass(frozen=True)
class Distortion:
    rotation_deg: float = 0.0
    scale: float = 1.0
    translation: tuple[int, int] = (0, 0)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not -60 <= self.rotation_deg <= 60:
            raise ValueError(f"rotation {self.rotation_deg} outside [-60, 60]")
        if not 0.25 <= self.scale <= 1.8:
            raise ValueError(f"scale {self.scale} outside [0.25, 1.8]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class SyntheticSpec:
    subject_seed: int
    sample_index: int = 0
    canvas: tuple[int, int] = (256, 128)
    stroke_count: int = 4
    distortion: Distortion | None = None

    def __post_init__(self):
        if not 2 <= self.stroke_count <= 6:
            raise ValueError(f"stroke_count {self.stroke_count} outside [2, 6]")
        w, h = self.canvas
        if w < 4 * MARGIN or h < 4 * MARGIN:
            raise ValueError(f"canvas {self.canvas} too small")


def _catmull_rom(points: np.ndarray, step: float = 0.25) -> np.ndarray:
    """Dense samples of the cubic Catmull-Rom curve through ``points``."""
    pts = np.vstack([points[0], points, points[-1]])
    out = []
    for i in range(1, len(pts) - 2):
        p0, p1, p2, p3 = pts[i - 1], pts[i], pts[i + 1], pts[i + 2]
        n = max(2, int(np.ceil(np.linalg.norm(p2 - p1) / step)))
        t = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        t2, t3 = t * t, t * t * t
        seg = 0.5 * ((2 * p1) + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t2
                     + (-p0 + 3 * p1 - 3 * p2 + p3) * t3)
        out.append(seg)
    out.append(points[-1:])
    return np.vstack(out)


def _control_points(spec: SyntheticSpec) -> list[np.ndarray]:
    rng = np.random.default_rng([0x5167, spec.subject_seed])
    w, h = spec.canvas
    left, right = MARGIN + 2, w - MARGIN - 2
    top, bottom = MARGIN + 2, h - MARGIN - 2
    n = spec.stroke_count
    # strokes tile the width with some overlap, like letter groups
    edges = np.linspace(left, right, n + 1)
    strokes = []
    for k in range(n):
        x0, x1 = edges[k] - 6, edges[k + 1] + 6
        m = int(rng.integers(5, 9))
        xs = np.sort(rng.uniform(x0, x1, m))
        xs[0], xs[-1] = max(x0, left), min(x1, right)
        ys = rng.uniform(top, bottom, m)
        strokes.append(np.column_stack([xs, ys]))
    # flourish underneath
    m = int(rng.integers(3, 5))
    xs = np.linspace(left + rng.uniform(0, 30), right - rng.uniform(0, 30), m)
    ys = bottom - rng.uniform(0, 12, m)
    strokes.append(np.column_stack([xs, ys]))

    jitter = np.random.default_rng([0x5167, spec.subject_seed, spec.sample_index + 1])
    out = []
    for pts in strokes:
        moved = pts + jitter.uniform(-JITTER_PX, JITTER_PX, pts.shape)
        moved[:, 0] = np.clip(moved[:, 0], MARGIN, w - 1 - MARGIN)
        moved[:, 1] = np.clip(moved[:, 1], MARGIN, h - 1 - MARGIN)
        out.append(moved)
    return out


def render_strokes(strokes, canvas: tuple[int, int], pen_radius: float = PEN_RADIUS,
                   ink_level: int = INK_LEVEL) -> GrayImage:
    """Anti-aliased rendering by supersampled distance-to-stroke coverage."""
    w, h = canvas
    s = SUPERSAMPLE
    hit = np.zeros((h * s, w * s), dtype=bool)
    for pts in strokes:
        dense = _catmull_rom(np.asarray(pts, dtype=float))
        # pixel centers sit at integer coordinates
        ij = np.rint((dense + 0.5) * s - 0.5).astype(int)
        ok = (ij[:, 0] >= 0) & (ij[:, 0] < w * s) & (ij[:, 1] >= 0) & (ij[:, 1] < h * s)
        hit[ij[ok, 1], ij[ok, 0]] = True
    dist = ndimage.distance_transform_edt(~hit)
    covered = (dist <= pen_radius * s).astype(np.float64)
    coverage = covered.reshape(h, s, w, s).mean(axis=(1, 3))
    values = BACKGROUND - coverage * (BACKGROUND - ink_level)
    return GrayImage.from_real(values)


def generate_signature(spec: SyntheticSpec) -> GrayImage:
    """Render the sample of ``spec``; the distortion, if any, is applied too."""
    img = render_strokes(_control_points(spec), spec.canvas)
    d = spec.distortion
    if d is not None:
        seed = int(np.random.default_rng([spec.subject_seed, spec.sample_index]).integers(2**31))
        img = distort(img, d.rotation_deg, d.scale, d.translation, d.noise_sigma, seed)
    return img


def distort(img: GrayImage, rotation_deg: float = 0.0, scale: float = 1.0,
            translation=(0, 0), noise_sigma: float = 0.0, seed: int = 0,
            canvas: tuple[int, int] | None = None, pad: int = 4) -> GrayImage:
    """Scale, then rotate (counter-clockwise), then place at an offset, then
    add Gaussian pixel noise.

    The transformed ink is centered on ``canvas`` (default: the input canvas
    grown enough to hold it) and shifted by ``translation`` = (right, down).
    """
    box = ink_bbox(img)
    # keep a background rim so edge ink is interpolated like interior ink
    src = np.full((box.height + 2 * pad, box.width + 2 * pad), BACKGROUND, dtype=np.uint8)
    src[pad:pad + box.height, pad:pad + box.width] = crop(img, box).pixels
    patch = GrayImage(src)
    if scale != 1.0:
        patch = resize(patch, max(1, round(patch.width * scale)),
                       max(1, round(patch.height * scale)))
    patch = rotate(patch, rotation_deg)
    try:
        patch = crop(patch, ink_bbox(patch))
    except SigkitError:
        raise InkClipped("distortion erased all ink") from None

    dx, dy = (int(t) for t in translation)
    if canvas is None:
        cw = max(img.width, patch.width + 2 * MARGIN) + 2 * abs(dx)
        ch = max(img.height, patch.height + 2 * MARGIN) + 2 * abs(dy)
    else:
        cw, ch = canvas
    left = (cw - patch.width) // 2 + dx
    top = (ch - patch.height) // 2 + dy
    if left < 0 or top < 0 or left + patch.width > cw or top + patch.height > ch:
        raise InkClipped(
            f"{patch.width}x{patch.height} ink at ({left}, {top}) leaves the {cw}x{ch} canvas"
        )
    out = np.full((ch, cw), float(BACKGROUND))
    out[top:top + patch.height, left:left + patch.width] = patch.pixels
    if noise_sigma > 0:
        out += np.random.default_rng(seed).normal(0.0, noise_sigma, out.shape)
    return GrayImage.from_real(out)


def subject_id(index: int) -> str:
    return f"s{index:03d}"


def subject_seed(seed: int, index: int) -> int:
    return int(np.random.default_rng([seed, index]).integers(2**31))


@dataclass(frozen=True)
class GroundTruth:
    subject_id: str
    sample: int
    rotation_deg: float
    scale: float
    tx: int
    ty: int
    noise_sigma: float
    seed: int


GROUND_TRUTH_COLUMNS = ("subject_id", "sample", "rotation_deg", "scale", "tx", "ty",
                        "noise_sigma", "seed")


def draw_distortion(rng: np.random.Generator, max_rotation: float = 30.0,
                    scale_range=(0.7, 1.3), max_shift: int = 10,
                    noise_sigma: float = 0.0) -> Distortion:
    """Integer-degree rotation, two-decimal scale, integer shift."""
    rot = int(rng.integers(-int(max_rotation), int(max_rotation) + 1))
    scale = round(float(rng.uniform(*scale_range)), 2)
    shift = tuple(int(v) for v in rng.integers(-max_shift, max_shift + 1, 2))
    return Distortion(float(rot), scale, shift, float(noise_sigma))


def generate_database(out_dir, subjects: int = 70, samples_per_subject: int = 10,
                      seed: int = 0, max_rotation: float = 30.0, scale_range=(0.7, 1.3),
                      noise_sigma: float = 4.0, canvas=(256, 128)) -> list[GroundTruth]:
    """Write ``subjects/<id>/<nn>.pgm`` plus ``ground_truth.csv`` under ``out_dir``.

    Sample 00 of every subject is the clean enrollment image; the others are
    jittered re-signings with a random distortion.
    """
    out_dir = Path(out_dir)
    rows = []
    for s in range(subjects):
        sid = subject_id(s)
        sseed = subject_seed(seed, s)
        sub_dir = out_dir / "subjects" / sid
        sub_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng([seed, s, 1])
        for k in range(samples_per_subject):
            d = None if k == 0 else draw_distortion(rng, max_rotation, scale_range,
                                                    noise_sigma=noise_sigma)
            spec = SyntheticSpec(sseed, k, canvas=canvas, distortion=d)
            save_image(generate_signature(spec), sub_dir / f"{k:02d}.pgm")
            d = d or Distortion()
            rows.append(GroundTruth(sid, k, d.rotation_deg, d.scale, d.translation[0],
                                    d.translation[1], d.noise_sigma, sseed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GROUND_TRUTH_COLUMNS)
    for r in rows:
        w.writerow([r.subject_id, r.sample, _fmt(r.rotation_deg), _fmt(r.scale), r.tx, r.ty,
                    _fmt(r.noise_sigma), r.seed])
    atomic_write_bytes(out_dir / "ground_truth.csv", buf.getvalue().encode())
    return rows


def read_ground_truth(path) -> list[GroundTruth]:
    with open(path, newline="") as fh:
        return [
            GroundTruth(r["subject_id"], int(r["sample"]), float(r["rotation_deg"]),
                        float(r["scale"]), int(r["tx"]), int(r["ty"]),
                        float(r["noise_sigma"]), int(r["seed"]))
            for r in csv.DictReader(fh)
        ]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------- gallery

@dataclass(frozen=True)
class GalleryEntry:
    subject_id: str
    features: FeatureVector
    source_path: Path


@dataclass
class Gallery:
    entries: list[GalleryEntry]
    manifest_path: Path | None = None
    errors: list[tuple[Path, str]] = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            if not e.subject_id:
                raise ValueError("subject ids must be nonempty")

    def samples(self):
        return [(e.features.values, e.subject_id) for e in self.entries]

    @property
    def subject_ids(self) -> list[str]:
        return [e.subject_id for e in self.entries]


def subject_images(image_dir) -> dict[str, list[Path]]:
    """``{subject_id: sorted sample paths}`` for ``<dir>/subjects/<id>/*.pgm``
    (``<dir>`` may also be the ``subjects`` directory itself)."""
    root = Path(image_dir)
    if (root / "subjects").is_dir():
        root = root / "subjects"
    if not root.is_dir():
        raise EmptyDirectory(f"{image_dir} is not a directory")
    out = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in sub.iterdir() if p.suffix.lower() in (".pgm", ".png"))
        if files:
            out[sub.name] = files
    return out


MANIFEST_PREFIX = ("subject_id", "sample_path")


def build_gallery(image_dir, out_manifest=None, *, feature_mode: str = "dct",
                  threshold: int = 128) -> Gallery:
    """Enroll the first sample of every subject and write the manifest CSV.

    Unreadable or blank images are skipped and reported in ``Gallery.errors``.
    """
    subjects = subject_images(image_dir)
    if not subjects:
        raise EmptyDirectory(f"no subject images under {image_dir}")
    entries, errors = [], []
    for sid, files in subjects.items():
        path = files[0]
        try:
            cropped, _, _ = remove_translation(load_image(path), threshold)
            fv = extract_features(cropped, mode=feature_mode, threshold=threshold,
                                  source_id=str(path))
        except SigkitError as exc:
            logger.warning("skipping %s: %s: %s", path, exc.name, exc)
            errors.append((path, f"{exc.name}: {exc}"))
            continue
        entries.append(GalleryEntry(sid, fv, path))
    gallery = Gallery(entries, Path(out_manifest) if out_manifest else None, errors)
    if out_manifest is not None:
        write_manifest(gallery, out_manifest)
    return gallery


def write_manifest(gallery: Gallery, path) -> None:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_PREFIX + tuple(f"f{i:02d}" for i in range(64)))
    base = path.resolve().parent
    for e in gallery.entries:
        rel = Path(os.path.relpath(Path(e.source_path).resolve(), base)).as_posix()
        w.writerow([e.subject_id, rel] + [_fmt(v) for v in e.features.values])
    atomic_write_bytes(path, buf.getvalue().encode())


def load_gallery(path) -> Gallery:
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"no such file: {path}")
    base = path.resolve().parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:2]) != MANIFEST_PREFIX or len(header) != 66:
            raise ValueError(f"{path}: not a gallery manifest")
        for row in reader:
            fv = FeatureVector([float(v) for v in row[2:]], source_id=row[1])
            entries.append(GalleryEntry(row[0], fv, base / row[1]))
    return Gallery(entries, path)
