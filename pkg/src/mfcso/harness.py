"""Outer cross-validation protocol, synthetic data and result aggregation."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    Dataset,
    load_dataset,
    min_max_apply,
    min_max_fit,
    stratified_kfold,
)
from .engine import AlgorithmConfig, Variant, run
from .knn import holdout_error
from .stats import wilcoxon_rank_sum

THREADS_ENV = "MFCSO_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise DataError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise DataError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SyntheticSpec:
    n_features: int = 500
    n_informative: int = 10
    n_samples: int = 100
    n_classes: int = 2
    noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_informative <= self.n_features:
            raise DataError("need 1 <= n_informative <= n_features")
        if self.n_classes < 2:
            raise DataError("need at least 2 classes")
        if self.n_samples < 2 * self.n_classes:
            raise DataError("need n_samples >= 2 * n_classes")
        if self.noise < 0:
            raise DataError("noise must be non-negative")


def synth_dataset(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Gaussian class clusters on planted features, pure noise elsewhere.

    On each informative feature every class gets its own mean level, with
    levels spaced ``max(1, 2 * noise)`` apart in a per-feature random order.
    Returns the dataset and the sorted informative column indices.
    """
    rng = np.random.default_rng(spec.seed)
    H, N, C = spec.n_samples, spec.n_features, spec.n_classes
    y = np.arange(H) % C
    informative = np.sort(rng.choice(N, spec.n_informative, replace=False))
    X = rng.standard_normal((H, N))
    spacing = max(1.0, 2.0 * spec.noise)
    levels = np.stack([rng.permutation(C) for _ in informative], axis=1) * spacing
    X[:, informative] = levels[y] + spec.noise * rng.standard_normal((H, informative.size))
    return Dataset(X, y, C, name=f"synth-{spec.seed}"), informative


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    dataset: str | None = None
    synthetic: SyntheticSpec | None = None
    outer_folds: int = 10
    runs: int = 30
    base_seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise DataError("runs must be >= 1")
        if self.outer_folds < 2:
            raise DataError("outer folds must be >= 2")
        if (self.dataset is None) == (self.synthetic is None):
            raise DataError("give exactly one of a dataset path or a synthetic spec")

    def load(self) -> Dataset:
        if self.synthetic is not None:
            return synth_dataset(self.synthetic)[0]
        return load_dataset(self.dataset)

    def echo(self) -> dict:
        alg = asdict(self.algorithm)
        alg["variant"] = self.algorithm.variant.value
        alg["filters"] = [f.value for f in self.algorithm.filters]
        return {
            "algorithm": alg,
            "dataset": self.dataset,
            "synthetic": None if self.synthetic is None else asdict(self.synthetic),
            "outer_folds": self.outer_folds,
            "runs": self.runs,
            "base_seed": self.base_seed,
        }


@dataclass
class FoldRecord:
    run: int
    fold: int
    seed: int
    test_error: float
    n_selected: int
    selected: list[int]
    best_task: str
    cv_fitness: float
    trace: list[list[float]]
    task_names: list[str]
    wall_time: float = 0.0


def summarize(records) -> dict:
    err = np.array([r.test_error for r in records]) * 100.0
    size = np.array([r.n_selected for r in records], dtype=np.float64)
    return {
        "mean_error_pct": float(err.mean()),
        "std_error_pct": float(err.std()),
        "mean_size": float(size.mean()),
        "std_size": float(size.std()),
        "n_records": len(records),
    }


@dataclass
class ExperimentReport:
    config: dict
    records: list[FoldRecord]
    aggregates: dict

    @property
    def name(self) -> str:
        if self.config.get("dataset"):
            return Path(self.config["dataset"]).stem
        syn = self.config.get("synthetic") or {}
        return f"synth-{syn.get('seed', 0)}"

    @property
    def variant(self) -> str:
        return self.config["algorithm"]["variant"]

    def record_errors(self) -> np.ndarray:
        return np.array([r.test_error for r in self.records])

    def to_dict(self, timings: bool = False) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            if not timings:
                d.pop("wall_time")
            recs.append(d)
        return {"config": self.config, "records": recs, "aggregates": self.aggregates}

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "fold", "seed", "test_error", "n_selected", "best_task",
                    "cv_fitness", "selected"])
        for r in self.records:
            w.writerow([r.run, r.fold, r.seed, repr(r.test_error), r.n_selected, r.best_task,
                        repr(r.cv_fitness), ";".join(map(str, r.selected))])
        return buf.getvalue()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = self.records[0].task_names if self.records else []
        w.writerow(["run", "fold", "generation"] + names)
        for r in self.records:
            for g, row in enumerate(r.trace):
                w.writerow([r.run, r.fold, g] + [repr(v) for v in row])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["config"], [FoldRecord(**r) for r in d["records"]], d["aggregates"])


def _cell_seed(run_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([run_seed, fold]).generate_state(1)[0])


def run_cell(data: Dataset, alg: AlgorithmConfig, run_idx: int, run_seed: int,
             fold: int, train_rows, test_rows) -> FoldRecord:
    """Normalise on the outer-train rows, optimise, score the outer-test rows."""
    raw_train = data.take_rows(train_rows)
    raw_test = data.take_rows(test_rows)
    model = min_max_fit(raw_train)
    train = min_max_apply(model, raw_train)
    test = min_max_apply(model, raw_test)
    try:
        res = run(replace(alg, seed=_cell_seed(run_seed, fold)), train)
        err = holdout_error(train, test, res.selected).error if res.selected.size else 1.0
    except Exception as exc:
        raise RuntimeError(f"run {run_idx} (seed {run_seed}), outer fold {fold}: {exc}") from exc
    return FoldRecord(
        run=run_idx, fold=fold, seed=run_seed, test_error=float(err),
        n_selected=int(res.selected.size), selected=[int(i) for i in res.selected_ids],
        best_task=res.task_names[res.best_task], cv_fitness=float(res.fitness),
        trace=res.trace.tolist(), task_names=res.task_names, wall_time=res.wall_time,
    )


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   data: Dataset | None = None) -> ExperimentReport:
    """Runs x outer folds; each run re-draws its folds from ``base_seed + run``.

    Cells are independent, so they may run in worker processes; records are
    ordered by (run, fold) either way.
    """
    if data is None:
        data = cfg.load()
    workers = worker_count() if workers is None else workers
    cells = []
    for r in range(cfg.runs):
        seed = cfg.base_seed + r
        folds = stratified_kfold(data.labels, cfg.outer_folds, seed)
        for f in range(folds.k):
            tr, te = folds.split(f)
            cells.append((data, cfg.algorithm, r, seed, f, tr, te))

    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            records = list(pool.map(_run_cell_args, cells))
    else:
        records = [run_cell(*c) for c in cells]
    records.sort(key=lambda rec: (rec.run, rec.fold))
    return ExperimentReport(cfg.echo(), records, summarize(records))


@dataclass(frozen=True)
class ComparisonRow:
    dataset: str
    variant: str
    mean_error_pct: float
    mean_size: float
    verdict: str


def _protocol(rep: ExperimentReport) -> tuple:
    c = rep.config
    return (c["outer_folds"], c["runs"], c["base_seed"], c["dataset"],
            json.dumps(c["synthetic"], sort_keys=True))


def aggregate(reports, reference: str | None = None) -> list[ComparisonRow]:
    """Table rows per report with a rank-sum verdict against ``reference``.

    The reference defaults to the first report's variant and gets a blank
    verdict. Verdicts read from the compared variant's side: '+' means its
    test errors are significantly lower than the reference's.
    """
    reports = list(reports)
    if not reports:
        return []
    proto = _protocol(reports[0])
    if any(_protocol(r) != proto for r in reports[1:]):
        raise DataError("reports were produced under different protocols")
    reference = reference or reports[0].variant
    refs = [r for r in reports if r.variant == reference]
    if not refs:
        raise DataError(f"no report for reference variant {reference!r}")
    ref = refs[0]
    rows = []
    for rep in reports:
        verdict = ""
        if rep is not ref:
            a, b = rep.record_errors(), ref.record_errors()
            if a.size >= 3 and b.size >= 3:
                verdict = wilcoxon_rank_sum(a, b).verdict
            else:
                verdict = "≈"
        rows.append(ComparisonRow(rep.name, rep.variant, rep.aggregates["mean_error_pct"],
                                  rep.aggregates["mean_size"], verdict))
    return rows


def baseline_config(alg: AlgorithmConfig) -> AlgorithmConfig:
    """FULL baseline sharing everything but the variant."""
    return replace(alg, variant=Variant.FULL_no_selection)
