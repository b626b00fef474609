"""Command-line entry point: ``moab {gen-data,train,ablation,export-embeddings}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import GeneratorSpec, Mode, generate, load_csv, save_csv
from .estimator import FusionClassifier
from .exceptions import MOABError
from .metrics import export_embeddings
from .models import ALL_VARIANTS
from .training import RunConfig, format_table, run_ablation_suite, train


def _counts(text: str) -> tuple[int, int, int]:
    try:
        counts = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    if len(counts) != 3:
        raise argparse.ArgumentTypeError(f"expected three class counts, got {len(counts)}")
    return counts


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classes", type=_counts, default=(396, 408, 654), help="samples per grade II,III,IV")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.XOR_CROSS_MODAL.value)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--max-rois", type=int, default=3, help="largest number of images per patient group")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=None, help="default: 0.001 unimodal, 0.005 fusion")
    p.add_argument("--weight-decay", type=float, default=None, help="default: 0 unimodal, 0.0005 fusion")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=1)
    p.add_argument("--data", default=None, help="dataset CSV; generated from the seed when omitted")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--replicas", type=int, default=9, help="test-time copies per test image")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--out", required=True)
    _add_generator_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moab", description="Train and evaluate image/gene fusion classifiers on synthetic or saved data."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset (CSV + .img sidecar)")
    _add_generator_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; images go to the same path with .img")

    p = sub.add_parser("train", help="train and evaluate one fusion variant")
    p.add_argument("--fusion", choices=ALL_VARIANTS, default="moab")
    _add_run_flags(p)

    p = sub.add_parser("ablation", help="train every variant and write a comparison table")
    _add_run_flags(p)

    p = sub.add_parser("export-embeddings", help="write penultimate activations of a trained model")
    p.add_argument("--model-dir", required=True, help="run directory or one of its fold_XX directories")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    return parser


def _generator(args) -> GeneratorSpec:
    return GeneratorSpec(
        class_counts=args.classes, mode=args.mode, noise=args.noise, seed=args.seed, max_rois_per_group=args.max_rois
    )


def _run_config(args, fusion: str) -> RunConfig:
    return RunConfig(
        fusion=fusion,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        folds=args.folds,
        data=args.data,
        generator=_generator(args),
        test_fraction=args.test_fraction,
        replicas=args.replicas,
        hidden=args.hidden,
        out=args.out,
    )


def _model_dir(path: Path) -> Path:
    if (path / "model.npz").exists():
        return path
    if (path / "fold_00" / "model.npz").exists():
        return path / "fold_00"
    raise MOABError(f"no trained model found in {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "gen-data":
            samples = generate(_generator(args))
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            save_csv(samples, args.out)
            print(f"wrote {len(samples)} samples to {args.out}")
        elif args.command == "train":
            result = train(_run_config(args, args.fusion))
            m, s = result.mean, result.std
            print(f"{args.fusion}: {len(result.reports)} fold(s), {result.n_params} parameters, {result.seconds:.1f}s")
            for k in m:
                print(f"  {k:12s} {m[k]:.4f} ± {s[k]:.4f}")
        elif args.command == "ablation":
            rows = run_ablation_suite(_run_config(args, "moab"))
            print(format_table(rows))
        else:
            clf = FusionClassifier.load(_model_dir(Path(args.model_dir)))
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            n = export_embeddings(clf, load_csv(args.data), args.out)
            print(f"wrote {n} embeddings to {args.out}")
    except (MOABError, OSError) as exc:
        print(f"moab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
