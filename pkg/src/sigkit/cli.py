"""``sigkit`` command line: generate data, enroll, train, align, identify and
run the three experiments.

Exit status: 0 on success, 1 on a domain error (its name is printed on
standard error), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import build_gallery, generate_database, load_gallery
from .errors import SigkitError
from .eval import (
    BENCHMARK_PAIRS,
    DEFAULT_BUDGETS,
    SignatureDatabase,
    convergence_sweep,
    feature_dataset,
    recognition_sweep,
    rst_error_table,
    stable_rates,
)
from .features import extract_features
from .imagecore import INK_THRESHOLD, atomic_write_bytes, load_image, save_image
from .pipeline import SignatureIdentifier
from .rbfn import (
    DEFAULT_REJECT,
    DEFAULT_RIDGE,
    DEFAULT_SPREAD,
    fit_exact,
    load_model,
    save_model,
    train_gradient,
)
from .rst import correct_rst

log = logging.getLogger("sigkit")

DEFAULT_RATES_TEXT = "0.01,0.001,0.001"


def _rates(text: str):
    if text == "auto":
        return None
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(parts) != 3 or min(parts) < 0:
        raise argparse.ArgumentTypeError(f"expected three non-negative rates, got {text!r}")
    return parts


def _int_list(text: str):
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="sigkit", formatter_class=fmt,
        description="Offline signature identification: RST correction, DCT features, RBF network.",
    )
    parser.add_argument("--version", action="version", version=f"sigkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(p, *names):
        if "seed" in names:
            p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        if "spread" in names:
            p.add_argument("--spread", type=_positive(float), default=DEFAULT_SPREAD,
                           help="Gaussian width of the hidden units")
        if "epochs" in names:
            p.add_argument("--epochs", type=int, default=0,
                           help="gradient epochs after the exact fit")
        if "rates" in names:
            p.add_argument("--rates", type=_rates, default=_rates(DEFAULT_RATES_TEXT),
                           help="step sizes weights,centers,widths (or 'auto')")
        if "threshold" in names:
            p.add_argument("--threshold", type=float, default=DEFAULT_REJECT,
                           help="minimum score to accept an identification")
        if "subjects" in names:
            p.add_argument("--subjects", type=_positive(int), default=70,
                           help="number of synthetic subjects")
        if "samples" in names:
            p.add_argument("--samples-per-subject", type=_positive(int), default=10,
                           help="images per subject (the first one enrolls)")
        if "ink" in names:
            p.add_argument("--ink-threshold", type=int, default=INK_THRESHOLD,
                           help="pixels darker than this are ink")

    p = sub.add_parser("gen", formatter_class=fmt, help="write a synthetic signature database")
    p.add_argument("--out", type=Path, required=True, help="database directory")
    common(p, "seed", "subjects", "samples")
    p.add_argument("--max-rotation", type=float, default=30.0, help="largest |rotation|, degrees")
    p.add_argument("--scale-range", type=float, nargs=2, default=(0.7, 1.3),
                   metavar=("MIN", "MAX"), help="probe scale range")
    p.add_argument("--noise", type=float, default=4.0, help="Gaussian pixel noise sigma")

    p = sub.add_parser("enroll", formatter_class=fmt,
                       help="extract features of each subject's first sample")
    p.add_argument("--db", type=Path, required=True, help="database directory")
    p.add_argument("--out", type=Path, default=None,
                   help="manifest CSV (default: <db>/gallery.csv)")
    p.add_argument("--feature-mode", choices=("dct", "pixels"), default="dct")
    common(p, "ink")

    p = sub.add_parser("train", formatter_class=fmt, help="fit the RBF network on a gallery")
    p.add_argument("--gallery", type=Path, required=True, help="manifest CSV from enroll")
    p.add_argument("--out", type=Path, required=True, help="model JSON")
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE, help="interpolation ridge term")
    p.add_argument("--centers", type=_positive(int), default=None,
                   help="hidden units (default: one per sample)")
    common(p, "spread", "epochs", "rates")

    p = sub.add_parser("rst", formatter_class=fmt, help="align one probe to a reference")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--probe", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="aligned probe (PGM)")
    p.add_argument("--report", type=Path, default=None, help="detected parameters (CSV)")
    common(p, "ink")

    p = sub.add_parser("features", formatter_class=fmt, help="64 features of an aligned image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="one-row CSV")
    p.add_argument("--feature-mode", choices=("dct", "pixels"), default="dct")
    common(p, "ink")

    p = sub.add_parser("identify", formatter_class=fmt, help="identify one probe")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--gallery", type=Path, required=True,
                   help="manifest whose images serve as alignment references")
    p.add_argument("--probe", type=Path, required=True)
    p.add_argument("--feature-mode", choices=("dct", "pixels"), default="dct")
    common(p, "threshold", "ink")

    p = sub.add_parser("eval-rst", formatter_class=fmt, help="RST detection error table")
    p.add_argument("--samples", type=_positive(int), default=50)
    p.add_argument("--benchmark-pairs", action="store_true",
                   help="use the ten fixed benchmark (rotation, scale) pairs")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", type=Path, required=True, help="report CSV")
    common(p, "seed")

    p = sub.add_parser("eval-convergence", formatter_class=fmt, help="MSE per iteration budget")
    p.add_argument("--budgets", type=_int_list, default=list(DEFAULT_BUDGETS))
    p.add_argument("--centers", type=_positive(int), default=None)
    p.add_argument("--out", type=Path, required=True, help="report CSV")
    common(p, "seed", "spread", "subjects")
    p.add_argument("--samples-per-subject", type=_positive(int), default=3)
    p.add_argument("--rates", type=_rates, default=None,
                   help="step sizes weights,centers,widths (default: auto)")
    p.set_defaults(subjects=20)

    p = sub.add_parser("eval-recognition", formatter_class=fmt,
                       help="recognition rate per number of probes")
    p.add_argument("--db", type=Path, default=None,
                   help="database directory (default: generate one in memory)")
    p.add_argument("--counts", type=_int_list, default=[50, 100, 150])
    p.add_argument("--max-rotation", type=float, default=30.0)
    p.add_argument("--noise", type=float, default=4.0)
    p.add_argument("--out", type=Path, required=True, help="report CSV")
    common(p, "seed", "spread", "threshold", "subjects", "samples")
    p.set_defaults(subjects=20)
    return parser


def run_config(args) -> dict:
    """Canonical, JSON-friendly echo of the parsed arguments."""
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "verbose":
            continue
        if isinstance(v, Path):
            v = v.as_posix()
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _cmd_gen(args):
    rows = generate_database(args.out, args.subjects, args.samples_per_subject, args.seed,
                             args.max_rotation, tuple(args.scale_range), args.noise)
    print(f"wrote {len(rows)} images for {args.subjects} subjects to {args.out}")


def _cmd_enroll(args):
    out = args.out or (args.db / "gallery.csv")
    gallery = build_gallery(args.db, out, feature_mode=args.feature_mode,
                            threshold=args.ink_threshold)
    for path, err in gallery.errors:
        print(f"skipped {path}: {err}", file=sys.stderr)
    print(f"enrolled {len(gallery.entries)} subjects into {out}")


def _cmd_train(args):
    gallery = load_gallery(args.gallery)
    samples = gallery.samples()
    model = fit_exact(samples, args.spread, ridge=args.ridge, n_centers=args.centers)
    if args.epochs:
        rates = args.rates
        if rates is None:
            rates = stable_rates(model, samples)
        model, state = train_gradient(model, samples, rates, args.epochs)
        print(f"trained {state.epoch} epochs, mse {state.mse:.6g}")
    save_model(model, args.out)
    print(f"saved {model.n_units}-unit model for {len(model.class_labels)} subjects to {args.out}")


def _cmd_rst(args):
    ref = load_image(args.reference)
    probe = load_image(args.probe)
    aligned, params = correct_rst(ref, probe, threshold=args.ink_threshold)
    save_image(aligned, args.out)
    if args.report is not None:
        profile = ";".join(f"{s:.17g}" for s in params.profile.scores)
        text = ("rotation_deg,tx,ty,scale_ratio,coarse_profile\n"
                f"{params.rotation_deg:g},{params.translation_x},{params.translation_y},"
                f"{params.scale_ratio:.17g},{profile}\n")
        atomic_write_bytes(args.report, text.encode())
    print(f"rotation {params.rotation_deg:g} deg, tx {params.translation_x}, "
          f"ty {params.translation_y}, scale ratio {params.scale_ratio:.4f}")


def _cmd_features(args):
    fv = extract_features(load_image(args.input), mode=args.feature_mode,
                          threshold=args.ink_threshold)
    atomic_write_bytes(args.out, (",".join(f"{v:.17g}" for v in fv.values) + "\n").encode())


def _cmd_identify(args):
    model = load_model(args.model)
    gallery = load_gallery(args.gallery)
    refs = {}
    for e in gallery.entries:
        refs.setdefault(e.subject_id, load_image(e.source_path))
    missing = [c for c in model.class_labels if c not in refs]
    if missing:
        raise ValueError(f"gallery has no reference image for {missing}")
    est = SignatureIdentifier.from_parts(model, refs, reject_threshold=args.threshold,
                                         feature_mode=args.feature_mode,
                                         threshold=args.ink_threshold)
    result = est.identify([load_image(args.probe)])[0]
    best = max(range(len(result.evidence)), key=lambda i: result.evidence[i])
    print(result.label)
    log.info("best evidence %.6g for %s", result.evidence[best], model.class_labels[best])


def _emit(report, args):
    report.config_echo = {**report.config_echo, "cli": run_config(args)}
    for p in report.write(args.out):
        print(f"wrote {p}")
    for k, v in sorted(report.aggregates.items()):
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")


def _cmd_eval_rst(args):
    pairs = BENCHMARK_PAIRS if args.benchmark_pairs else None
    n = len(BENCHMARK_PAIRS) if args.benchmark_pairs else args.samples
    _emit(rst_error_table(n, args.seed, pairs=pairs, noise_sigma=args.noise), args)


def _cmd_eval_convergence(args):
    data = feature_dataset(args.subjects, args.samples_per_subject, args.seed)
    _emit(convergence_sweep(args.budgets, args.spread, data, seed=args.seed, rates=args.rates,
                            n_centers=args.centers), args)


def _cmd_eval_recognition(args):
    if args.db is not None:
        db = SignatureDatabase.load(args.db)
    else:
        db = SignatureDatabase.synthetic(args.subjects, args.samples_per_subject, args.seed,
                                         max_rotation=args.max_rotation, noise_sigma=args.noise)
    _emit(recognition_sweep(args.counts, db, args.seed, spread=args.spread,
                            reject_threshold=args.threshold), args)


COMMANDS = {
    "gen": _cmd_gen,
    "enroll": _cmd_enroll,
    "train": _cmd_train,
    "rst": _cmd_rst,
    "features": _cmd_features,
    "identify": _cmd_identify,
    "eval-rst": _cmd_eval_rst,
    "eval-convergence": _cmd_eval_convergence,
    "eval-recognition": _cmd_eval_recognition,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except SigkitError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
