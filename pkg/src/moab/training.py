"""Run configuration, multi-fold training runs and the ablation suite."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import GeneratorSpec, Sample, generate, load_csv, split
from .estimator import FusionClassifier, default_hyperparameters
from .exceptions import ConfigError
from .metrics import MetricsReport, confusion, export_embeddings, report
from .models import ALL_VARIANTS

logger = logging.getLogger(__name__)

METRIC_KEYS = ("f1_grade_iv", "f1_micro", "f1_macro", "accuracy")

ABLATION_ROWS = (
    ("CNN (Image)", "img-only"),
    ("MLP (Genes)", "gene-only"),
    ("Concatenation", "concat"),
    ("OAF", "oaf"),
    ("DBF", "dbf"),
    ("Standard Addition*", "std-add"),
    ("MOAB", "moab"),
)


@dataclass
class RunConfig:
    fusion: str = "moab"
    epochs: int = 10
    batch_size: int = 8
    lr: float | None = None
    weight_decay: float | None = None
    seed: int = 0
    folds: int = 1
    data: str | None = None
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    test_fraction: float = 0.2
    replicas: int = 9
    hidden: int = 64
    dropout: float = 0.1
    out: str | None = None

    def validate(self) -> None:
        if self.fusion not in ALL_VARIANTS:
            raise ConfigError(f"unknown fusion {self.fusion!r}; choose from {', '.join(ALL_VARIANTS)}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 1 <= self.folds <= 15:
            raise ConfigError(f"folds must lie in 1..15, got {self.folds}")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay is not None and self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if self.data is not None and not Path(self.data).exists():
            raise ConfigError(f"dataset {self.data} does not exist")

    def resolved(self) -> dict:
        """Config as plain data with per-variant learning rate and weight decay filled in."""
        lr, wd = default_hyperparameters(self.fusion)
        d = dataclasses.asdict(self)
        d["lr"] = lr if self.lr is None else self.lr
        d["weight_decay"] = wd if self.weight_decay is None else self.weight_decay
        d["generator"]["mode"] = self.generator.mode.value
        d["generator"]["class_counts"] = list(self.generator.class_counts)
        return d


@dataclass
class RunResult:
    config: dict
    reports: list[MetricsReport]
    loss_curves: list[list[float]]
    n_params: int
    seconds: float

    @property
    def mean(self) -> dict[str, float]:
        return {k: float(np.mean([getattr(r, k) for r in self.reports])) for k in METRIC_KEYS}

    @property
    def std(self) -> dict[str, float]:
        return {k: float(np.std([getattr(r, k) for r in self.reports])) for k in METRIC_KEYS}

    def metrics_dict(self) -> dict:
        """Deterministic summary (no timing) written to ``metrics.json``."""
        return {
            "fusion": self.config["fusion"],
            "folds": len(self.reports),
            "n_params": self.n_params,
            "mean": self.mean,
            "std": self.std,
            "per_fold": [r.to_dict() for r in self.reports],
        }


def fold_seeds(seed: int, fold: int) -> tuple[int, int]:
    """(split seed, model seed) for one Monte Carlo fold."""
    split_seed, model_seed = np.random.SeedSequence([seed, fold]).generate_state(2)
    return int(split_seed), int(model_seed)


def load_samples(config: RunConfig) -> list[Sample]:
    if config.data is not None:
        return load_csv(config.data)
    return generate(config.generator)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_loss_curve(path: Path, losses) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss"])
        for epoch, loss in enumerate(losses, start=1):
            writer.writerow([epoch, repr(float(loss))])


def train(config: RunConfig, samples: list[Sample] | None = None) -> RunResult:
    """Train and evaluate ``config.folds`` Monte Carlo folds.

    Each fold re-splits the data by group and re-initializes the model from
    seeds derived from ``(config.seed, fold)``.  When ``config.out`` is set,
    each fold directory receives ``metrics.json``, ``embeddings.csv`` (test
    split), ``loss_curve.csv``, ``config.json`` and the saved model.
    """
    config.validate()
    resolved = config.resolved()
    start = time.perf_counter()
    if samples is None:
        samples = load_samples(config)
    out = Path(config.out) if config.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", resolved)

    reports, curves, n_params = [], [], 0
    for fold in range(config.folds):
        split_seed, model_seed = fold_seeds(config.seed, fold)
        ds = split(samples, config.test_fraction, config.replicas, split_seed)
        clf = FusionClassifier(
            fusion=config.fusion,
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=resolved["lr"],
            weight_decay=resolved["weight_decay"],
            hidden=config.hidden,
            dropout=config.dropout,
            random_state=model_seed,
        ).fit(ds.train)
        rep = report(confusion(clf.predict(ds.test), [s.grade for s in ds.test]))
        logger.info("%s fold %d: micro F1 %.3f, macro F1 %.3f", config.fusion, fold, rep.f1_micro, rep.f1_macro)
        reports.append(rep)
        curves.append(list(clf.loss_curve_))
        n_params = clf.n_params_
        if out is not None:
            fold_dir = out / f"fold_{fold:02d}"
            fold_dir.mkdir(exist_ok=True)
            _write_json(fold_dir / "metrics.json", rep.to_dict())
            _write_loss_curve(fold_dir / "loss_curve.csv", clf.loss_curve_)
            export_embeddings(clf, ds.test, fold_dir / "embeddings.csv")
            _write_json(fold_dir / "config.json", {**resolved, "fold": fold, "split_seed": split_seed, "model_seed": model_seed})
            clf.save(fold_dir)

    result = RunResult(resolved, reports, curves, n_params, time.perf_counter() - start)
    if out is not None:
        _write_json(out / "metrics.json", result.metrics_dict())
        _write_json(out / "run_info.json", {"seconds": result.seconds, "n_params": n_params})
    return result


def format_table(rows: list[tuple[str, RunResult]]) -> str:
    lines = [
        "| Method | F1 (Grade IV) | F1-Micro | F1-Macro |",
        "|---|---|---|---|",
    ]
    for name, res in rows:
        m, s = res.mean, res.std
        cells = [f"{m[k]:.3f} ± {s[k]:.3f}" for k in ("f1_grade_iv", "f1_micro", "f1_macro")]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def run_ablation_suite(base: RunConfig) -> list[tuple[str, RunResult]]:
    """Train every ablation variant on identical data, splits and seeds."""
    base.validate()
    samples = load_samples(base)
    rows = []
    for name, variant in ABLATION_ROWS:
        sub_out = str(Path(base.out) / variant) if base.out else None
        cfg = dataclasses.replace(base, fusion=variant, out=sub_out)
        rows.append((name, train(cfg, samples)))
    if base.out:
        out = Path(base.out)
        _write_json(
            out / "ablation.json",
            [{"method": name, "fusion": res.config["fusion"], **res.metrics_dict()} for name, res in rows],
        )
        (out / "ablation.md").write_text(format_table(rows) + "\n")
    return rows
