"""Desk-scale experiments: RST detection errors, MSE against training budget,
and recognition rate against the number of probes. Each returns an
:class:`EvalReport` that serializes to CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    SyntheticSpec,
    distort,
    draw_distortion,
    generate_signature,
    load_image,
    subject_id,
    subject_images,
    subject_seed,
)
from .errors import NonFiniteCost, SigkitError
from .features import extract_features
from .imagecore import atomic_write_bytes, crop, ink_bbox
from .pipeline import SignatureIdentifier
from .rbfn import hidden_layer, init_model, train_gradient
from .rst import correct_rst

logger = logging.getLogger(__name__)

# ten fixed (rotation, scale) probes spanning steep angles and strong shrinking
BENCHMARK_PAIRS = (
    (-50, 0.54), (-20, 0.9), (-10, 0.65), (-5, 1.43), (3, 1.0),
    (12, 0.83), (15, 1.5), (32, 1.78), (33, 0.75), (42, 0.26),
)
DEFAULT_BUDGETS = (5, 10, 20, 40, 50, 60, 70, 100, 200, 500)

RST_COLUMNS = ("original_rotation", "original_scale", "detected_rotation", "detected_scale",
               "abs_rotation_error", "abs_scale_error")
RST_SERIES_COLUMNS = ("sample", "rotation_error", "scale_error")
CONVERGENCE_COLUMNS = ("mse", "spread", "iterations")
RECOGNITION_COLUMNS = ("number_of_samples", "recognition_rate_percent")
PROBE_COLUMNS = ("index", "subject_id", "sample", "predicted", "correct")


@dataclass
class EvalReport:
    kind: str
    columns: tuple
    rows: list[tuple]
    aggregates: dict
    config_echo: dict
    series: dict = field(default_factory=dict)   # name -> (columns, rows)

    def config_line(self) -> str:
        return canonical_config(self.config_echo)

    def to_csv(self) -> str:
        return _csv_text(self.config_line(), self.columns, self.rows)

    def summary_csv(self) -> str:
        rows = [(k, v) for k, v in sorted(self.aggregates.items())]
        return _csv_text(self.config_line(), ("metric", "value"), rows)

    def write(self, path) -> list[Path]:
        """Write the main table to ``path`` plus ``<stem>_summary.csv`` and one
        ``<stem>_<series>.csv`` per extra series; returns the written paths."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        out = [path, path.with_name(f"{path.stem}_summary{path.suffix}")]
        atomic_write_bytes(out[0], self.to_csv().encode())
        atomic_write_bytes(out[1], self.summary_csv().encode())
        for name, (cols, rows) in sorted(self.series.items()):
            p = path.with_name(f"{path.stem}_{name}{path.suffix}")
            atomic_write_bytes(p, _csv_text(self.config_line(), cols, rows).encode())
            out.append(p)
        return out


def canonical_config(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


def _csv_text(config_line: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {config_line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


# ------------------------------------------------------------------ RST table

def rst_aggregates(rows) -> dict:
    ok = [r for r in rows if r[2] is not None]
    rot = [r[4] for r in ok]
    sc = [r[5] for r in ok]
    agg = {"n_samples": len(rows), "n_failed": len(rows) - len(ok)}
    if ok:
        agg.update(
            median_abs_rotation_error=float(np.median(rot)),
            max_abs_rotation_error=float(np.max(rot)),
            median_abs_scale_error=float(np.median(sc)),
            max_abs_scale_error=float(np.max(sc)),
        )
    return agg


def rst_error_table(n_samples: int, seed: int = 0, *, pairs=None,
                    rotation_range=(-55, 55), scale_range=(0.3, 1.8),
                    noise_sigma: float = 0.0, max_shift: int = 10) -> EvalReport:
    """Distort fresh synthetic signatures by known (rotation, scale), correct
    them and tabulate detected against original values.

    Scales are reported the way the probe was distorted: the detected scale is
    the reciprocal of the reference/probe height ratio.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng([seed, 0x7AB1])
    if pairs is None:
        pairs = [(int(rng.integers(rotation_range[0], rotation_range[1] + 1)),
                  round(float(rng.uniform(*scale_range)), 2)) for _ in range(n_samples)]
    else:
        pairs = list(pairs)[:n_samples]
        if len(pairs) < n_samples:
            raise ValueError(f"only {len(pairs)} pairs for {n_samples} samples")
    rows, series = [], []
    for i, (rot, scale) in enumerate(pairs):
        shift = tuple(int(v) for v in rng.integers(-max_shift, max_shift + 1, 2))
        ref = generate_signature(SyntheticSpec(subject_seed(seed, i)))
        try:
            probe = distort(ref, rot, scale, shift, noise_sigma, seed=subject_seed(seed, i) + 1)
            _, p = correct_rst(ref, probe)
        except SigkitError as exc:
            logger.warning("sample %d (%s, %s): %s", i, rot, scale, exc.name)
            rows.append((float(rot), float(scale), None, None, None, None))
            series.append((i + 1, None, None))
            continue
        det_scale = p.detected_scale
        rows.append((float(rot), float(scale), p.rotation_deg, det_scale,
                     abs(p.rotation_deg - rot), abs(det_scale - scale)))
        series.append((i + 1, p.rotation_deg - rot, det_scale - scale))
    config = {"kind": "rst_table", "n_samples": n_samples, "seed": seed,
              "pairs": "benchmark" if pairs == list(BENCHMARK_PAIRS)[:n_samples] else "random",
              "rotation_range": list(rotation_range), "scale_range": list(scale_range),
              "noise_sigma": noise_sigma, "max_shift": max_shift}
    return EvalReport("rst_table", RST_COLUMNS, rows, rst_aggregates(rows), config,
                      {"series": (RST_SERIES_COLUMNS, series)})


# ---------------------------------------------------------------- convergence

def feature_dataset(subjects: int = 20, samples_per_subject: int = 3, seed: int = 0,
                    feature_mode: str = "dct"):
    """Features of clean tight-cropped re-signings, labelled by subject id."""
    out = []
    for s in range(subjects):
        sseed = subject_seed(seed, s)
        for k in range(samples_per_subject):
            img = generate_signature(SyntheticSpec(sseed, k))
            fv = extract_features(crop(img, ink_bbox(img)), mode=feature_mode)
            out.append((fv.values, f"s{s:03d}"))
    return out


def stable_rates(model, samples, center_factor: float = 0.1):
    """Step sizes below the stability limit of the weight sub-problem."""
    X = np.vstack([np.asarray(v, dtype=float) for v, _ in samples])
    G = hidden_layer(model, X)
    eta_w = 1.0 / float(np.linalg.eigvalsh(G.T @ G)[-1])
    return (eta_w, center_factor * eta_w, center_factor * eta_w)


def convergence_sweep(iteration_budgets, spread: float = 0.5, dataset=None, *,
                      seed: int = 0, rates=None, n_centers: int | None = None,
                      weight_scale: float = 0.01) -> EvalReport:
    """Train the same initial network once per budget and record final MSE.

    ``rates=None`` picks step sizes from the initial network's curvature.
    """
    budgets = [int(b) for b in iteration_budgets]
    if budgets != sorted(budgets) or not budgets or budgets[0] < 1:
        raise ValueError(f"budgets must be positive and ascending, got {budgets}")
    if dataset is None:
        dataset = feature_dataset(seed=seed)
    model0 = init_model(dataset, spread, n_centers=n_centers, seed=seed,
                        weight_scale=weight_scale)
    if rates is None:
        rates = stable_rates(model0, dataset)
    rates = tuple(float(r) for r in rates)
    rows = []
    n_failed = 0
    for b in budgets:
        try:
            _, state = train_gradient(model0, dataset, rates, b)
            rows.append((state.mse, float(spread), b))
        except NonFiniteCost as exc:
            logger.warning("budget %d: %s", b, exc)
            rows.append((float("nan"), float(spread), b))
            n_failed += 1
    finite = [r[0] for r in rows if not math.isnan(r[0])]
    agg = {"n_budgets": len(rows), "n_failed": n_failed,
           "non_increasing": int(all(a >= b for a, b in zip(finite, finite[1:]))),
           "final_mse": finite[-1] if finite else float("nan")}
    config = {"kind": "convergence", "budgets": budgets, "spread": spread, "seed": seed,
              "rates": list(rates), "n_centers": n_centers, "n_samples": len(dataset),
              "weight_scale": weight_scale}
    return EvalReport("convergence", CONVERGENCE_COLUMNS, rows, agg, config)


# ---------------------------------------------------------------- recognition

@dataclass
class SignatureDatabase:
    """Images grouped by subject; sample 0 of each subject enrolls."""

    images: dict            # subject_id -> list of GrayImage (sample order)
    origin: str = "memory"

    @classmethod
    def load(cls, db_dir) -> SignatureDatabase:
        images = {sid: [load_image(p) for p in files]
                  for sid, files in subject_images(db_dir).items()}
        return cls(images, str(db_dir))

    @classmethod
    def synthetic(cls, subjects: int = 20, samples_per_subject: int = 10, seed: int = 0,
                  max_rotation: float = 30.0, scale_range=(0.7, 1.3),
                  noise_sigma: float = 4.0) -> SignatureDatabase:
        images = {}
        for s in range(subjects):
            sseed = subject_seed(seed, s)
            rng = np.random.default_rng([seed, s, 1])
            imgs = []
            for k in range(samples_per_subject):
                d = None if k == 0 else draw_distortion(rng, max_rotation, scale_range,
                                                        noise_sigma=noise_sigma)
                imgs.append(generate_signature(SyntheticSpec(sseed, k, distortion=d)))
            images[subject_id(s)] = imgs
        return cls(images, f"synthetic:{subjects}x{samples_per_subject}:seed={seed}")

    def enrollment(self):
        ids = sorted(self.images)
        return [self.images[s][0] for s in ids], ids

    def probes(self):
        return [(sid, k, img) for sid in sorted(self.images)
                for k, img in enumerate(self.images[sid]) if k > 0]


def recognition_sweep(sample_counts, dataset: SignatureDatabase, seed: int = 0, *,
                      spread: float = 0.5, reject_threshold: float = 0.5,
                      use_enrollment_as_probes: bool = False,
                      estimator: SignatureIdentifier | None = None) -> EvalReport:
    """Recognition rate over growing prefixes of a seeded probe order.

    A probe counts as correct only when the predicted subject id equals its
    own; rejections count as errors.
    """
    counts = [int(c) for c in sample_counts]
    images, ids = dataset.enrollment()
    if estimator is None:
        estimator = SignatureIdentifier(spread=spread, reject_threshold=reject_threshold)
    estimator.fit(images, ids)
    if use_enrollment_as_probes:
        probes = [(sid, 0, img) for img, sid in zip(images, ids)]
    else:
        probes = dataset.probes()
    if counts and max(counts) > len(probes):
        raise ValueError(f"count {max(counts)} exceeds the {len(probes)} available probes")
    order = np.random.default_rng([seed, 0x3EC0]).permutation(len(probes))
    needed = order[:max(counts, default=0)]
    probe_rows = []
    for idx in needed:
        sid, k, img = probes[idx]
        try:
            pred = estimator.predict([img])[0]
        except SigkitError as exc:
            logger.warning("probe %s/%02d: %s", sid, k, exc.name)
            pred = None
        probe_rows.append((int(idx), sid, k, str(pred), pred == sid))
    rows = [(c, 100.0 * sum(r[4] for r in probe_rows[:c]) / c) for c in counts]
    agg = {f"rate_at_{c}": rate for c, rate in rows}
    agg["n_probes"] = len(probe_rows)
    agg["n_correct"] = int(sum(r[4] for r in probe_rows))
    config = {"kind": "recognition", "counts": counts, "seed": seed, "dataset": dataset.origin,
              "spread": estimator.spread, "reject_threshold": estimator.reject_threshold,
              "feature_mode": estimator.feature_mode,
              "probes": "enrollment" if use_enrollment_as_probes else "test"}
    return EvalReport("recognition", RECOGNITION_COLUMNS, rows, agg, config,
                      {"probes": (PROBE_COLUMNS, probe_rows)})
