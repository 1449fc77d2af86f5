"""Filter rankings (Relief-F, term variance, Pearson) and knee-point task generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import DataError, Dataset


class Filter(str, Enum):
    RELIEFF = "ReliefF"
    TV = "TV"
    PCC = "PCC"


class TaskSource(str, Enum):
    FULL = "Full"
    RELIEFF = "ReliefF"
    TV = "TV"
    PCC = "PCC"


FULL_TASK_WEIGHT = 0.1
FILTER_TASK_WEIGHT = 0.45
DEFAULT_FILTERS = (Filter.RELIEFF, Filter.TV, Filter.PCC)


@dataclass(frozen=True)
class FeatureWeights:
    method: Filter
    weights: np.ndarray

    def scores(self) -> np.ndarray:
        """Ranking scores: PCC ranks by magnitude, the others by value."""
        if self.method is Filter.PCC:
            return np.abs(self.weights)
        return self.weights


@dataclass(frozen=True)
class ReliefFParams:
    h: int = 10
    passes: int | None = None  # None means one sweep over all samples
    seed: int = 0

    def __post_init__(self):
        if self.h < 1:
            raise DataError("Relief-F neighbour count h must be >= 1")
        if self.passes is not None and self.passes < 1:
            raise DataError("Relief-F passes must be >= 1")


@dataclass(frozen=True)
class TaskDefinition:
    task_id: int
    feature_indices: np.ndarray
    transfer_weight: float
    source: TaskSource

    def __post_init__(self):
        idx = np.unique(np.asarray(self.feature_indices, dtype=np.int64))
        if idx.size == 0:
            raise DataError("a task needs at least one feature")
        idx.setflags(write=False)
        object.__setattr__(self, "feature_indices", idx)

    @property
    def dim(self) -> int:
        return self.feature_indices.size

    @property
    def name(self) -> str:
        return self.source.value


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[TaskDefinition, ...]
    n_features: int
    weights: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        fulls = [t for t in self.tasks if t.source is TaskSource.FULL]
        if len(fulls) != 1 or self.tasks[0].source is not TaskSource.FULL:
            raise DataError("a task set has exactly one Full task, placed first")
        if fulls[0].dim != self.n_features:
            raise DataError("the Full task must cover every feature")

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i) -> TaskDefinition:
        return self.tasks[i]


def relieff_weights(d: Dataset, p: ReliefFParams = ReliefFParams()) -> FeatureWeights:
    """Relief-F weights with prior-weighted misses from every other class.

    ``diff`` divides by the per-feature range over the whole dataset, so a
    constant feature scores exactly zero. When a class has fewer than ``h``
    candidates, all of them are used and the sum is averaged over that count.
    """
    X, y = d.features, d.labels
    H = d.n_samples
    counts = d.class_counts()
    if counts.min() < 2:
        raise DataError("Relief-F needs at least 2 samples in every class")
    prior = counts / H
    span = X.max(axis=0) - X.min(axis=0)
    inv_span = np.divide(1.0, span, out=np.zeros_like(span), where=span > 0)

    members = [np.flatnonzero(y == c) for c in range(d.n_classes)]

    passes = H if p.passes is None else p.passes
    order = np.random.default_rng(p.seed).permutation(H)
    w = np.zeros(d.n_features)
    for t in range(passes):
        i = order[t % H]
        ci = y[i]
        dist = np.sqrt(((X - X[i]) ** 2).sum(axis=1))

        def nearest(pool):
            ranked = pool[np.argsort(dist[pool], kind="stable")]
            return ranked[: p.h]

        hits = nearest(members[ci][members[ci] != i])
        w -= (np.abs(X[hits] - X[i]) * inv_span).sum(axis=0) / (passes * hits.size)
        for c in range(d.n_classes):
            if c == ci:
                continue
            misses = nearest(members[c])
            scale = prior[c] / (1.0 - prior[ci])
            w += scale * (np.abs(X[misses] - X[i]) * inv_span).sum(axis=0) / (passes * misses.size)
    return FeatureWeights(Filter.RELIEFF, w)


def tv_weights(d: Dataset) -> FeatureWeights:
    X = d.features
    return FeatureWeights(Filter.TV, ((X - X.mean(axis=0)) ** 2).mean(axis=0))


def pcc_weights(d: Dataset) -> FeatureWeights:
    if d.n_samples < 2:
        raise DataError("Pearson correlation needs at least 2 samples")
    X = d.features
    yc = d.labels - d.labels.mean()
    Xc = X - X.mean(axis=0)
    num = yc @ Xc
    den = np.sqrt((Xc**2).sum(axis=0) * (yc**2).sum())
    r = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return FeatureWeights(Filter.PCC, r)


def knee_index(sorted_scores) -> int:
    """Rank of the point farthest from the chord joining the curve's ends.

    Distances are compared unnormalised (the chord length is a common
    factor); ties resolve to the lowest rank.
    """
    r = np.asarray(sorted_scores, dtype=np.float64)
    n = r.size
    if n < 2:
        raise DataError("knee selection needs at least 2 scores")
    x1, dy = n - 1.0, r[-1] - r[0]
    if dy == 0:
        return 0
    j = np.arange(n, dtype=np.float64)
    dist = np.abs(dy * j - x1 * (r - r[0]))
    return int(np.argmax(dist))


def knee_select(w: FeatureWeights) -> np.ndarray:
    """Features ranked at or above the knee, in original column order."""
    scores = w.scores()
    if scores.size < 2:
        raise DataError("knee selection needs at least 2 features")
    ranking = np.argsort(-scores, kind="stable")
    k = knee_index(scores[ranking])
    return np.sort(ranking[: k + 1])


_FILTERS = {
    Filter.RELIEFF: lambda d, p: relieff_weights(d, p),
    Filter.TV: lambda d, p: tv_weights(d),
    Filter.PCC: lambda d, p: pcc_weights(d),
}


def compute_weights(d: Dataset, filters=DEFAULT_FILTERS, relieff=ReliefFParams()):
    return {Filter(f): _FILTERS[Filter(f)](d, relieff) for f in filters}


def generate_tasks(
    d: Dataset,
    filters=DEFAULT_FILTERS,
    relieff: ReliefFParams = ReliefFParams(),
    full_weight: float = FULL_TASK_WEIGHT,
    filter_weight: float = FILTER_TASK_WEIGHT,
) -> TaskSet:
    """Full task first, then one knee-cut task per filter in the given order."""
    weights = compute_weights(d, filters, relieff)
    tasks = [TaskDefinition(0, np.arange(d.n_features), full_weight, TaskSource.FULL)]
    for f, fw in weights.items():
        tasks.append(
            TaskDefinition(len(tasks), knee_select(fw), filter_weight, TaskSource(f.value))
        )
    return TaskSet(tuple(tasks), d.n_features, weights)


def single_task(n_features: int) -> TaskSet:
    return TaskSet(
        (TaskDefinition(0, np.arange(n_features), FULL_TASK_WEIGHT, TaskSource.FULL),), n_features
    )
