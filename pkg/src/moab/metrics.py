"""Confusion-matrix metrics and embedding export."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError, FileError, UndefinedMetricError

N_CLASSES = 3


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows indexed by true grade and columns by predicted grade."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp()

    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp()


def confusion(preds, labels, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise DataError(f"{len(preds)} predictions for {len(labels)} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise DataError(f"{name} outside 0..{n_classes - 1}: {sorted(set(arr.tolist()))}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def _require_nonempty(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise UndefinedMetricError("metric undefined on an empty confusion matrix")


def micro_precision(cm: ConfusionMatrix) -> float:
    _require_nonempty(cm)
    return cm.tp().sum() / (cm.tp() + cm.fp()).sum()


def micro_recall(cm: ConfusionMatrix) -> float:
    _require_nonempty(cm)
    return cm.tp().sum() / (cm.tp() + cm.fn()).sum()


def micro_f1(cm: ConfusionMatrix) -> float:
    """Arithmetic mean of micro-averaged precision and recall."""
    return float((micro_precision(cm) + micro_recall(cm)) / 2)


def per_class_f1(cm: ConfusionMatrix, class_index: int) -> float:
    """``2 TP / (2 TP + FP + FN)``, taken as 0 whenever the class has no true positive."""
    _require_nonempty(cm)
    tp = cm.tp()[class_index]
    if tp == 0:
        return 0.0
    return float(2 * tp / (2 * tp + cm.fp()[class_index] + cm.fn()[class_index]))


def macro_f1(cm: ConfusionMatrix) -> float:
    n = cm.counts.shape[0]
    return float(np.mean([per_class_f1(cm, i) for i in range(n)]))


def accuracy(cm: ConfusionMatrix) -> float:
    _require_nonempty(cm)
    return float(cm.tp().sum() / cm.total)


@dataclass(frozen=True)
class MetricsReport:
    per_class_f1: tuple[float, ...]
    f1_grade_iv: float
    f1_micro: float
    f1_macro: float
    accuracy: float
    n_samples: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class_f1"] = list(self.per_class_f1)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(**{**d, "per_class_f1": tuple(d["per_class_f1"])})


def report(cm: ConfusionMatrix) -> MetricsReport:
    per_class = tuple(per_class_f1(cm, i) for i in range(cm.counts.shape[0]))
    return MetricsReport(
        per_class_f1=per_class,
        f1_grade_iv=per_class[2],
        f1_micro=micro_f1(cm),
        f1_macro=macro_f1(cm),
        accuracy=accuracy(cm),
        n_samples=cm.total,
    )


def export_embeddings(model, samples, path) -> int:
    """Write ``sample_id, grade, e0..e{k-1}`` rows for ``samples``.

    ``model`` is anything with ``transform(samples) -> (n, k)`` array, such as
    a fitted :class:`moab.estimator.FusionClassifier`.  Returns the row count.
    """
    embeddings = np.asarray(model.transform(samples))
    width = embeddings.shape[1] if embeddings.ndim == 2 else 0
    try:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "grade"] + [f"e{i}" for i in range(width)])
            for s, row in zip(samples, embeddings):
                writer.writerow([s.sample_id, s.grade] + [repr(float(x)) for x in row])
    except OSError as exc:
        raise FileError(f"cannot write embeddings to {path}: {exc}") from exc
    return len(samples)
