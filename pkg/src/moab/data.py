"""Synthetic paired image/gene dataset, group-aware splits, file I/O and batching.

Each synthetic patient (group) has one grade, one gene vector and one to
``max_rois_per_group`` images.  In the cross-modal mode the grade depends on
two latent bits: ``u`` drawn in the image (horizontal vs vertical stripes) and
``v`` written into the genes (a signed mean shift on 20 CNV features plus
the mutation-status flag).  ``(0, 0) -> 0``, ``(1, 1) -> 1`` and the two
mixed cases ``-> 2``, so no single modality can separate all three grades.
"""

from __future__ import annotations

import csv
import enum
import struct
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import DataError, FormatError, ParameterError, SplitError
from .tensor import Tensor

N_GENES = 80
N_CNV = 79
IMAGE_SIZE = 32
GRADE_CLASS_COUNTS = (396, 408, 654)
MAGIC = b"MOAB"
_HEADER = struct.Struct("<4sIII")
CSV_HEADER = ["sample_id", "group_id", "grade"] + [f"g{i}" for i in range(N_GENES)]


class Mode(str, enum.Enum):
    XOR_CROSS_MODAL = "xor"
    UNIMODAL_EASY = "easy"


@dataclass(frozen=True, eq=False)
class Sample:
    sample_id: str
    group_id: str
    grade: int
    genes: np.ndarray
    image: np.ndarray  # (1, 32, 32), values in [0, 1]

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.group_id == other.group_id
            and self.grade == other.grade
            and np.array_equal(self.genes, other.genes)
            and np.array_equal(self.image, other.image)
        )


@dataclass(frozen=True)
class GeneratorSpec:
    class_counts: tuple[int, int, int] = GRADE_CLASS_COUNTS
    mode: Mode = Mode.XOR_CROSS_MODAL
    noise: float = 0.1
    seed: int = 0
    max_rois_per_group: int = 3
    gene_shift: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "class_counts", tuple(int(c) for c in self.class_counts))
        if len(self.class_counts) != 3 or min(self.class_counts) <= 0:
            raise ParameterError(f"need three positive class counts, got {self.class_counts}")
        if self.noise < 0:
            raise ParameterError(f"noise must be non-negative, got {self.noise}")
        if self.max_rois_per_group < 1:
            raise ParameterError("max_rois_per_group must be at least 1")

    @classmethod
    def scaled(cls, total: int, **kwargs) -> GeneratorSpec:
        """Class counts proportional to the glioma grade distribution, summing to ``total``."""
        ratios = np.asarray(GRADE_CLASS_COUNTS, dtype=float) / sum(GRADE_CLASS_COUNTS)
        raw = ratios * total
        counts = np.floor(raw).astype(int)
        for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
            counts[i] += 1
        return cls(class_counts=tuple(int(c) for c in counts), **kwargs)


def _grating_image(rng: np.random.Generator, orientation: str, noise: float, period: int = 6) -> np.ndarray:
    """Bright stripes of width ``period // 2`` at a random phase; "h", "v" or "+" (both)."""
    stripes = (np.arange(IMAGE_SIZE) + rng.integers(period)) % period < period // 2
    img = np.full((IMAGE_SIZE, IMAGE_SIZE), 0.1)
    if orientation in ("h", "+"):
        img[stripes, :] = 0.9
    if orientation in ("v", "+"):
        img[:, stripes] = 0.9
    if noise:
        img = img + noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)[None]


def _group_sizes(rng: np.random.Generator, n: int, max_size: int) -> list[int]:
    sizes = []
    while n > 0:
        s = int(min(n, rng.integers(1, max_size + 1)))
        sizes.append(s)
        n -= s
    return sizes


def generate(spec: GeneratorSpec) -> list[Sample]:
    """Draw a dataset; identical specs give bit-identical samples."""
    rng = np.random.default_rng(spec.seed)
    subset = rng.choice(N_CNV, size=20, replace=False)
    signs = rng.choice([-1.0, 1.0], size=20)

    groups = []  # (grade, u, v, size)
    for grade, count in enumerate(spec.class_counts):
        sizes = _group_sizes(rng, count, spec.max_rois_per_group)
        for k, size in enumerate(sizes):
            if grade == 0:
                u, v = 0, 0
            elif grade == 1:
                u, v = 1, 1
            else:
                u, v = (1, 0) if k % 2 == 0 else (0, 1)
            groups.append((grade, u, v, size))
    order = rng.permutation(len(groups))

    samples = []
    for gidx, pos in enumerate(order):
        grade, u, v, size = groups[pos]
        genes = np.zeros(N_GENES)
        if spec.mode is Mode.XOR_CROSS_MODAL:
            genes[subset] = (2 * v - 1) * spec.gene_shift * signs
            genes[N_CNV] = float(v)
            orientation = "v" if u else "h"
        else:
            genes[subset] = (grade - 1) * spec.gene_shift * signs
            genes[N_CNV] = float(grade == 2)
            orientation = "hv+"[grade]
        if spec.noise:
            genes[:N_CNV] += spec.noise * rng.standard_normal(N_CNV)
        for _ in range(size):
            samples.append(
                Sample(
                    sample_id=f"s{len(samples):05d}",
                    group_id=f"p{gidx:04d}",
                    grade=grade,
                    genes=genes.copy(),
                    image=_grating_image(rng, orientation, spec.noise),
                )
            )
    return samples


@dataclass
class DatasetSplit:
    train: list[Sample]
    test: list[Sample]
    replicas: int = 9
    seed: int = 0
    test_groups: list[str] = field(default_factory=list)


def _replicate(sample: Sample, k: int, rng: np.random.Generator, noise: float) -> Sample:
    shift = rng.integers(-2, 3, size=2)
    img = np.roll(sample.image, tuple(int(s) for s in shift), axis=(1, 2))
    if noise:
        img = img + noise * rng.standard_normal(img.shape)
    return Sample(
        sample_id=f"{sample.sample_id}_p{k}",
        group_id=sample.group_id,
        grade=sample.grade,
        genes=sample.genes.copy(),
        image=np.clip(img, 0.0, 1.0),
    )


def split(
    samples: Sequence[Sample],
    test_fraction: float = 0.2,
    replicas: int = 9,
    seed: int = 0,
    replica_noise: float = 0.05,
) -> DatasetSplit:
    """Group-aware train/test split with test-time image replicas.

    ``round(test_fraction * n_groups)`` whole groups go to the test side.
    Each test sample is expanded to ``replicas`` copies: the original plus
    shifted, re-noised images carrying the same genes and grade.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if replicas < 1:
        raise SplitError(f"replicas must be at least 1, got {replicas}")
    groups = list(dict.fromkeys(s.group_id for s in samples))
    n_test = int(round(test_fraction * len(groups)))
    if n_test < 1 or n_test >= len(groups):
        raise SplitError(
            f"cannot split {len(groups)} groups with test_fraction {test_fraction}: "
            f"{n_test} test groups would leave an empty side"
        )
    rng = np.random.default_rng(seed)
    test_groups = {groups[i] for i in rng.permutation(len(groups))[:n_test]}
    train = [s for s in samples if s.group_id not in test_groups]
    test = []
    for s in samples:
        if s.group_id not in test_groups:
            continue
        if replicas == 1:
            test.append(s)
            continue
        test.append(
            Sample(f"{s.sample_id}_p0", s.group_id, s.grade, s.genes.copy(), s.image.copy())
        )
        test.extend(_replicate(s, k, rng, replica_noise) for k in range(1, replicas))
    return DatasetSplit(train, test, replicas, seed, sorted(test_groups))


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".img")


def save_csv(samples: Sequence[Sample], path) -> None:
    """Write genes/labels/ids to ``path`` and images to the ``.img`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow([s.sample_id, s.group_id, s.grade] + [repr(float(g)) for g in s.genes])
    with open(sidecar_path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, len(samples), IMAGE_SIZE, IMAGE_SIZE))
        for s in samples:
            fh.write(np.asarray(s.image, dtype="<f4").reshape(-1).tobytes())


def load_csv(path) -> list[Sample]:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: line 1: missing header")
        if header[:3] != CSV_HEADER[:3]:
            raise FormatError(f"{path}: line 1: header must start with sample_id,group_id,grade, got {header[:3]}")
        n_genes = len(header) - 3
        if n_genes != N_GENES or header != CSV_HEADER:
            raise FormatError(
                f"{path}: line 1: expected {N_GENES} gene columns g0..g{N_GENES - 1}, found {n_genes}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise FormatError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} fields, found {len(row)}")
            try:
                grade = int(row[2])
                genes = np.array([float(x) for x in row[3:]])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from exc
            if grade not in (0, 1, 2):
                raise FormatError(f"{path}: line {lineno}: grade must be 0, 1 or 2, got {grade}")
            rows.append((row[0], row[1], grade, genes))

    img_path = sidecar_path(path)
    blob = img_path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{img_path}: offset 0: truncated header ({len(blob)} bytes)")
    magic, count, height, width = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{img_path}: offset 0: bad magic {magic!r}, expected {MAGIC!r}")
    if count != len(rows):
        raise FormatError(f"{img_path}: offset 4: image count {count} != {len(rows)} CSV rows")
    expected = _HEADER.size + 4 * count * height * width
    if len(blob) != expected:
        raise FormatError(f"{img_path}: offset {_HEADER.size}: expected {expected} bytes, found {len(blob)}")
    images = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    images = images.reshape(count, 1, height, width)
    return [Sample(sid, gid, grade, genes, images[i]) for i, (sid, gid, grade, genes) in enumerate(rows)]


def to_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (images, genes, labels) arrays."""
    if not samples:
        return np.zeros((0, 1, IMAGE_SIZE, IMAGE_SIZE)), np.zeros((0, N_GENES)), np.zeros(0, dtype=np.int64)
    images = np.stack([s.image for s in samples])
    genes = np.stack([s.genes for s in samples])
    labels = np.array([s.grade for s in samples], dtype=np.int64)
    return images, genes, labels


def to_features(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Flat feature matrix ``[genes | image pixels]`` and labels, for the estimator API."""
    images, genes, labels = to_arrays(samples)
    return np.hstack([genes, images.reshape(len(images), -1)]), labels


def index_batches(n: int, batch_size: int, shuffle: bool, rng: np.random.Generator | None) -> Iterator[np.ndarray]:
    if batch_size < 1:
        raise ParameterError(f"batch_size must be at least 1, got {batch_size}")
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


class Batch(NamedTuple):
    images: Tensor
    genes: Tensor
    labels: np.ndarray
    sample_ids: list[str]


def batches(samples: Sequence[Sample], batch_size: int, shuffle: bool = False, seed: int = 0) -> Iterator[Batch]:
    """One epoch of mini-batches; the last batch may be smaller."""
    rng = np.random.default_rng(seed) if shuffle else None
    images, genes, labels = to_arrays(samples)
    for idx in index_batches(len(samples), batch_size, shuffle, rng):
        yield Batch(Tensor(images[idx]), Tensor(genes[idx]), labels[idx], [samples[i].sample_id for i in idx])


def check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (not np.issubdtype(labels.dtype, np.integer) and not np.all(labels == np.round(labels))):
        raise DataError("labels must be integer class indices")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > 2):
        raise DataError(f"labels must be 0, 1 or 2, got {sorted(set(labels.tolist()))}")
    return labels
