"""1-nearest-neighbour classification over feature masks and balanced error."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .data import Dataset, FoldAssignment


class EmptyMaskError(ValueError):
    """A feature mask selected nothing; there is no distance to compute."""


@dataclass(frozen=True)
class FeatureMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __len__(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class ErrorReport:
    error: float
    tpr: np.ndarray
    confusion: np.ndarray


def _columns(mask) -> np.ndarray:
    if isinstance(mask, FeatureMask):
        cols = mask.indices
    else:
        m = np.asarray(mask)
        cols = np.flatnonzero(m) if m.dtype == bool else m.astype(np.int64)
    if cols.size == 0:
        raise EmptyMaskError("feature mask selects no features")
    return np.ascontiguousarray(cols, dtype=np.int64)


# Squared distances are accumulated in column order, so a partial sum that
# already reaches the current best can be abandoned without changing the
# result. Candidates are scanned by ascending row index and only a strictly
# smaller distance replaces the incumbent: ties go to the lowest index.


@numba.njit(cache=False, nogil=True)
def _nearest(train, train_labels, query, cols, allowed):
    best = np.inf
    best_j = -1
    for j in range(train.shape[0]):
        if not allowed[j]:
            continue
        acc = 0.0
        for c in cols:
            d = train[j, c] - query[c]
            acc += d * d
            if acc >= best:
                break
        if acc < best:
            best = acc
            best_j = j
    return train_labels[best_j]


@numba.njit(cache=False, nogil=True)
def _predict_many(train, train_labels, queries, cols):
    out = np.empty(queries.shape[0], dtype=np.int64)
    allowed = np.ones(train.shape[0], dtype=np.bool_)
    for i in range(queries.shape[0]):
        out[i] = _nearest(train, train_labels, queries[i], cols, allowed)
    return out


@numba.njit(cache=False, nogil=True)
def _predict_cv(X, labels, folds, cols):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    allowed = np.empty(n, dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            allowed[j] = folds[j] != folds[i]
        out[i] = _nearest(X, labels, X[i], cols, allowed)
    return out


def nn1_classify(train_rows, train_labels, query, mask) -> int:
    """Label of the training row nearest to ``query`` over the masked columns."""
    train_rows = np.ascontiguousarray(train_rows, dtype=np.float64)
    if train_rows.shape[0] == 0:
        raise ValueError("training set is empty")
    cols = _columns(mask)
    labels = np.ascontiguousarray(train_labels, dtype=np.int64)
    q = np.ascontiguousarray(query, dtype=np.float64)
    allowed = np.ones(train_rows.shape[0], dtype=np.bool_)
    return int(_nearest(train_rows, labels, q, cols, allowed))


def nn1_predict(train_rows, train_labels, queries, mask) -> np.ndarray:
    cols = _columns(mask)
    return _predict_many(
        np.ascontiguousarray(train_rows, dtype=np.float64),
        np.ascontiguousarray(train_labels, dtype=np.int64),
        np.ascontiguousarray(queries, dtype=np.float64),
        cols,
    )


def balanced_error_rate(pred, truth, c: int) -> ErrorReport:
    """One minus mean per-class recall over the classes present in ``truth``."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    support = confusion.sum(axis=1)
    present = support > 0
    tpr = np.zeros(c)
    tpr[present] = np.diag(confusion)[present] / support[present]
    error = 1.0 - tpr[present].mean() if present.any() else 0.0
    return ErrorReport(float(error), tpr, confusion)


def cv_predictions(train: Dataset, mask, folds: FoldAssignment) -> np.ndarray:
    """Held-out 1-NN prediction for every sample, each fold against the rest."""
    return _predict_cv(train.features, train.labels, folds.folds, _columns(mask))


def masked_cv_error(train: Dataset, mask, folds: FoldAssignment) -> float:
    pred = cv_predictions(train, mask, folds)
    return balanced_error_rate(pred, train.labels, train.n_classes).error


def holdout_error(train: Dataset, test: Dataset, mask) -> ErrorReport:
    """Balanced error of ``test`` classified against all of ``train``."""
    pred = nn1_predict(train.features, train.labels, test.features, mask)
    return balanced_error_rate(pred, test.labels, train.n_classes)
