"""Dataset container, CSV ingestion, min-max scaling and stratified folds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when a dataset or its derived structures are invalid."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Sample matrix (H x N) with dense integer class labels.

    ``feature_ids`` tag each column with its index in the original file so
    that they survive column subsetting.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"labels length {y.shape[0] if y.ndim == 1 else y.shape} "
                f"does not match {X.shape[0]} feature rows"
            )
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError("labels must be integers")
        y = y.astype(np.int64)
        c = int(self.n_classes)
        if y.size and (y.min() < 0 or y.max() >= c):
            raise DataError(f"labels must lie in [0, {c})")
        missing = np.setdiff1d(np.arange(c), y)
        if missing.size:
            raise DataError(f"classes {missing.tolist()} have no samples")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        ids = np.arange(X.shape[1]) if self.feature_ids is None else np.asarray(self.feature_ids)
        ids = ids.astype(np.int64)
        if ids.shape != (X.shape[1],):
            raise DataError("feature_ids length must equal the number of features")
        if np.unique(ids).size != ids.size:
            raise DataError("feature_ids must be unique")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "n_classes", c)
        object.__setattr__(self, "feature_ids", _frozen(ids))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take_rows(self, rows) -> "Dataset":
        """Row subset with labels kept as-is; every class must survive."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.features[rows], self.labels[rows], self.n_classes, self.feature_ids, self.name
        )

    def take_features(self, cols) -> "Dataset":
        cols = np.asarray(cols, dtype=np.int64)
        return Dataset(
            self.features[:, cols], self.labels, self.n_classes, self.feature_ids[cols], self.name
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.n_classes, self.feature_ids, self.name)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_dataset(path, format: str = "csv") -> Dataset:
    """Read a label-last CSV file.

    A first row whose feature cells are not all numeric is treated as a
    header. String labels are mapped to indices in order of first
    appearance; numeric labels are densified the same way.
    """
    if format != "csv":
        raise DataError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    start = 0
    if not all(_is_number(c) for c in rows[0][:-1]):
        start = 1
    body = rows[start:]
    if not body:
        raise DataError(f"{path}: no data rows")

    width = len(body[0])
    if width < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    X = np.empty((len(body), width - 1))
    raw_labels = []
    for i, row in enumerate(body):
        lineno = i + start + 1
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        try:
            X[i] = [float(c) for c in row[:-1]]
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: non-numeric feature value ({exc})") from None
        raw_labels.append(row[-1].strip())

    index: dict[str, int] = {}
    y = np.array([index.setdefault(lab, len(index)) for lab in raw_labels], dtype=np.int64)
    if len(index) < 2:
        raise DataError(f"{path}: only one class present; classification is undefined")
    return Dataset(X, y, len(index), name=path.stem)


def save_dataset(d: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in d.feature_ids] + ["class"])
        for row, lab in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


@dataclass(frozen=True)
class NormalizationModel:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=np.float64)
        hi = np.asarray(self.maximum, dtype=np.float64)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DataError("normalization bounds must satisfy min <= max")
        object.__setattr__(self, "minimum", _frozen(lo))
        object.__setattr__(self, "maximum", _frozen(hi))


def min_max_fit(train: Dataset) -> NormalizationModel:
    if train.n_samples < 1:
        raise DataError("cannot fit normalization on an empty dataset")
    return NormalizationModel(train.features.min(axis=0), train.features.max(axis=0))


def min_max_apply(model: NormalizationModel, d: Dataset) -> Dataset:
    if model.minimum.shape[0] != d.n_features:
        raise DataError(
            f"normalization model has {model.minimum.shape[0]} features, dataset has {d.n_features}"
        )
    span = model.maximum - model.minimum
    const = span == 0
    scaled = (d.features - model.minimum) / np.where(const, 1.0, span)
    scaled[:, const] = 0.0
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return d.with_features(scaled)


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray
    k: int

    def __post_init__(self):
        f = np.asarray(self.folds, dtype=np.int64)
        if np.bincount(f, minlength=self.k).min() == 0:
            raise DataError("every fold must be non-empty")
        object.__setattr__(self, "folds", _frozen(f))

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_rows, test_rows) for one fold."""
        test = self.folds == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def effective_folds(labels, k: int) -> int:
    """Requested fold count capped by the smallest class size, floor 2."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64))
    counts = counts[counts > 0]
    smallest = int(counts.min())
    if smallest < 2:
        raise DataError("stratified folds need at least 2 samples in every class")
    return max(2, min(int(k), smallest))


def stratified_kfold(labels, k: int, seed) -> FoldAssignment:
    """Shuffle each class by ``seed`` and deal its members round-robin to folds."""
    if k < 2:
        raise DataError("fold count must be at least 2")
    labels = np.asarray(labels, dtype=np.int64)
    k = effective_folds(labels, k)
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        # rotate the dealing start so small classes don't all pile into fold 0
        folds[members] = (np.arange(members.size) + offset) % k
        offset = (offset + members.size) % k
    return FoldAssignment(folds, k)
