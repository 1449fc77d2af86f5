"""Multitask competitive swarm optimizer for feature selection.

One swarm per task evolves side by side. Each generation runs four phases
over the tasks in their fixed order, and every random draw happens inside
them in this order:

1. competition: one permutation per task pairs its particles;
2. loser updates: per pair, ``u``, then ``r1, r2, r3``, then any source
   winner picks needed by a transfer update;
3. winner mutation: per winner, a gate vector and a perturbation vector;
4. re-evaluation of every particle whose position changed.

Fitness evaluation draws nothing, so evaluation order and parallelism do not
affect results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import DataError, Dataset, FoldAssignment, stratified_kfold
from .filters import (
    DEFAULT_FILTERS,
    Filter,
    ReliefFParams,
    TaskDefinition,
    TaskSet,
    generate_tasks,
    single_task,
)
from .knn import FeatureMask, masked_cv_error


class Variant(str, Enum):
    MF_CSO = "MF_CSO"
    EMT_noKT = "EMT_noKT"
    MF_CSO_R = "MF_CSO_R"
    MF_PSO = "MF_PSO"
    CSO_FS_single_task = "CSO_FS_single_task"
    FULL_no_selection = "FULL_no_selection"


SINGLE_TASK_VARIANTS = (Variant.CSO_FS_single_task, Variant.FULL_no_selection)

# inertia-weight PSO used by the MF_PSO ablation
PSO_ACCEL = 1.49445
PSO_W_START = 0.9
PSO_W_DROP = 0.5


@dataclass(frozen=True)
class AlgorithmConfig:
    variant: Variant = Variant.MF_CSO
    population: int = 300
    iterations: int = 70
    p_trans: float = 0.5
    delta: float = 0.5
    alpha: float = 0.999999
    phi: float = 0.0
    eta_m: float = 20.0
    mutation_rate: float | None = None  # None: 1 / task dimension
    inner_folds: int = 10
    filters: tuple = DEFAULT_FILTERS
    relieff: ReliefFParams = field(default_factory=ReliefFParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "filters", tuple(Filter(f) for f in self.filters))
        if not 0.0 <= self.p_trans <= 1.0:
            raise DataError(f"p_trans must lie in [0, 1], got {self.p_trans}")
        if not 0.0 <= self.delta <= 1.0:
            raise DataError(f"delta must lie in [0, 1], got {self.delta}")
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise DataError("mutation_rate must lie in [0, 1]")
        if self.iterations < 0:
            raise DataError("iterations must be >= 0")
        if self.inner_folds < 2:
            raise DataError("inner_folds must be >= 2")
        n = self.n_tasks
        if self.population % 2 or self.population < 2 * n:
            raise DataError(
                f"population {self.population} must be even and at least 2 per task ({n} tasks)"
            )

    @property
    def n_tasks(self) -> int:
        if self.variant in SINGLE_TASK_VARIANTS:
            return 1
        return 1 + len(self.filters)

    def task_sizes(self, n_tasks: int | None = None) -> list[int]:
        """Even subpopulation sizes summing to ``population``, as equal as possible.

        300 over four tasks gives [76, 76, 74, 74].
        """
        n = self.n_tasks if n_tasks is None else n_tasks
        base = (self.population // n) // 2 * 2
        extra_pairs = (self.population - base * n) // 2
        return [base + 2 * (t < extra_pairs) for t in range(n)]


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    fitness: float = np.inf
    error: float = 1.0
    size: int = 0


@dataclass
class Swarm:
    """Particles of one task stored row-wise."""

    task: TaskDefinition
    positions: np.ndarray
    velocities: np.ndarray
    fitness: np.ndarray
    errors: np.ndarray
    sizes: np.ndarray
    # personal bests, used only by the PSO variant
    pbest_positions: np.ndarray | None = None
    pbest_fitness: np.ndarray | None = None
    pbest_errors: np.ndarray | None = None
    pbest_sizes: np.ndarray | None = None

    def __post_init__(self):
        if self.positions.shape[0] % 2:
            raise DataError("swarm size must be even")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def mean_position(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def particle(self, i: int) -> Particle:
        return Particle(
            self.positions[i].copy(),
            self.velocities[i].copy(),
            float(self.fitness[i]),
            float(self.errors[i]),
            int(self.sizes[i]),
        )

    def best(self) -> tuple[int, Particle]:
        """Lowest-fitness member (first index on ties); PSO swarms report personal bests."""
        if self.pbest_fitness is not None:
            i = int(np.argmin(self.pbest_fitness))
            return i, Particle(
                self.pbest_positions[i].copy(),
                self.velocities[i].copy(),
                float(self.pbest_fitness[i]),
                float(self.pbest_errors[i]),
                int(self.pbest_sizes[i]),
            )
        i = int(np.argmin(self.fitness))
        return i, self.particle(i)


@dataclass
class MultiSwarm:
    swarms: list[Swarm]
    tasks: TaskSet
    rng: np.random.Generator
    generation: int = 0
    overlaps: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.swarms) != len(self.tasks):
            raise DataError("swarm count must equal task count")
        if not self.overlaps:
            self.overlaps = task_overlaps(self.tasks)


@dataclass
class RunResult:
    best: list[Particle]
    best_task: int
    task_names: list[str]
    task_sizes: list[int]
    selected: np.ndarray
    selected_ids: np.ndarray
    fitness: float
    error: float
    trace: np.ndarray  # (generations + 1, tasks) best fitness per task
    evaluations: int
    wall_time: float = 0.0
    test_error: float | None = None

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "best_task": self.best_task,
            "best_task_name": self.task_names[self.best_task],
            "fitness": self.fitness,
            "cv_error": self.error,
            "n_selected": int(self.selected.size),
            "selected": [int(i) for i in self.selected_ids],
            "tasks": [
                {"name": n, "size": s, "best_fitness": p.fitness, "best_error": p.error,
                 "best_n_selected": p.size}
                for n, s, p in zip(self.task_names, self.task_sizes, self.best)
            ],
            "trace": self.trace.tolist(),
            "evaluations": self.evaluations,
        }
        if self.test_error is not None:
            out["test_error"] = self.test_error
        if timings:
            out["wall_time"] = self.wall_time
        return out


def decode_mask(position, delta: float = 0.5) -> FeatureMask:
    return FeatureMask(np.asarray(position) > delta)


def fitness_value(error: float, size: int, n_features: int, alpha: float) -> float:
    return alpha * error + (1.0 - alpha) * size / n_features


class FitnessEvaluator:
    """Scores positions of any task on a fixed training set and inner folds.

    The size term divides by the full feature count so fitness values of
    different tasks are comparable.
    """

    def __init__(self, train: Dataset, folds: FoldAssignment, delta: float, alpha: float):
        self.train = train
        self.folds = folds
        self.delta = delta
        self.alpha = alpha
        self.evaluations = 0

    def __call__(self, task: TaskDefinition, position) -> tuple[float, float, int]:
        self.evaluations += 1
        mask = decode_mask(position, self.delta)
        size = mask.count
        if size == 0:
            return 1.0, 1.0, 0
        cols = task.feature_indices[mask.bits]
        error = masked_cv_error(self.train, cols, self.folds)
        return fitness_value(error, size, self.train.n_features, self.alpha), error, size


def evaluate_fitness(particle: Particle, task: TaskDefinition, train: Dataset,
                     folds: FoldAssignment, cfg: AlgorithmConfig) -> float:
    """Score ``particle`` in place and return its fitness."""
    f, e, s = FitnessEvaluator(train, folds, cfg.delta, cfg.alpha)(task, particle.position)
    particle.fitness, particle.error, particle.size = f, e, s
    return f


def pairwise_compete(fitness, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random pairing; the lower fitness wins and the first of a tied pair wins."""
    fitness = np.asarray(fitness)
    n = fitness.shape[0]
    if n % 2:
        raise DataError("pairwise competition needs an even number of particles")
    perm = rng.permutation(n)
    a, b = perm[0::2], perm[1::2]
    a_wins = fitness[a] <= fitness[b]
    return np.where(a_wins, a, b), np.where(a_wins, b, a)


def cso_plain_update(x_loser, v_loser, x_winner, mean, r, phi: float = 0.0):
    """Loser learns from its winner and, weighted by ``phi``, the swarm mean."""
    r1, r2, r3 = r
    v = r1 * v_loser + r2 * (x_winner - x_loser) + phi * r3 * (mean - x_loser)
    return np.clip(x_loser + v, 0.0, 1.0), v


def cso_transfer_update(x_loser, v_loser, x_winner, x_aggregate, r):
    """Loser learns from its own winner and from the cross-task aggregate."""
    r1, r2, r3 = r
    v = r1 * v_loser + r2 * (x_winner - x_loser) + r3 * (x_aggregate - x_loser)
    return np.clip(x_loser + v, 0.0, 1.0), v


def task_overlaps(tasks: TaskSet) -> dict:
    """(target, source) -> (target positions, source positions) of shared features."""
    out = {}
    for t in tasks:
        for s in tasks:
            if s.task_id != t.task_id:
                _, ti, si = np.intersect1d(
                    t.feature_indices, s.feature_indices, assume_unique=True, return_indices=True
                )
                out[t.task_id, s.task_id] = (ti, si)
    return out


def aggregate_winner(target: TaskDefinition, sources, loser, overlaps=None) -> np.ndarray:
    """Weighted blend of source winners over the target's features.

    ``sources`` is a sequence of ``(TaskDefinition, position)``. Each target
    feature averages the sources that contain it with their transfer weights
    renormalised over those sources; features no source contains keep the
    loser's own value.
    """
    loser = np.asarray(loser, dtype=np.float64)
    num = np.zeros_like(loser)
    den = np.zeros_like(loser)
    for task, pos in sources:
        if overlaps is not None:
            ti, si = overlaps[target.task_id, task.task_id]
        else:
            _, ti, si = np.intersect1d(
                target.feature_indices, task.feature_indices, assume_unique=True,
                return_indices=True,
            )
        num[ti] += task.transfer_weight * np.asarray(pos)[si]
        den[ti] += task.transfer_weight
    covered = den > 0
    out = loser.copy()
    out[covered] = num[covered] / den[covered]
    return out


def polynomial_mutation(x, rng: np.random.Generator, eta: float = 20.0, rate: float | None = None):
    """Bounded polynomial mutation on [0, 1]; draws two uniforms per gene."""
    x = np.asarray(x, dtype=np.float64)
    if rate is None:
        rate = 1.0 / x.size
    gate = rng.random(x.size) < rate
    u = rng.random(x.size)
    if not gate.any():
        return x.copy()
    xg, ug = x[gate], u[gate]
    power = 1.0 / (eta + 1.0)
    lower = ug < 0.5
    dq = np.empty_like(xg)
    xy = 1.0 - xg[lower]
    val = 2.0 * ug[lower] + (1.0 - 2.0 * ug[lower]) * xy ** (eta + 1.0)
    dq[lower] = val**power - 1.0
    xy = xg[~lower]
    val = 2.0 * (1.0 - ug[~lower]) + 2.0 * (ug[~lower] - 0.5) * xy ** (eta + 1.0)
    dq[~lower] = 1.0 - val**power
    out = x.copy()
    out[gate] = np.clip(xg + dq, 0.0, 1.0)
    return out


def _new_swarm(task: TaskDefinition, n: int, rng: np.random.Generator, pso: bool) -> Swarm:
    pos = rng.random((n, task.dim))
    sw = Swarm(task, pos, np.zeros_like(pos), np.full(n, np.inf), np.ones(n), np.zeros(n, int))
    if pso:
        sw.pbest_positions = pos.copy()
        sw.pbest_fitness = np.full(n, np.inf)
        sw.pbest_errors = np.ones(n)
        sw.pbest_sizes = np.zeros(n, int)
    return sw


def _evaluate_rows(sw: Swarm, rows, evaluate) -> None:
    for i in rows:
        sw.fitness[i], sw.errors[i], sw.sizes[i] = evaluate(sw.task, sw.positions[i])


def _refresh_pbest(sw: Swarm) -> None:
    better = sw.fitness < sw.pbest_fitness
    sw.pbest_positions[better] = sw.positions[better]
    sw.pbest_fitness[better] = sw.fitness[better]
    sw.pbest_errors[better] = sw.errors[better]
    sw.pbest_sizes[better] = sw.sizes[better]


def init_multiswarm(tasks: TaskSet, cfg: AlgorithmConfig, rng, evaluate) -> MultiSwarm:
    pso = cfg.variant is Variant.MF_PSO
    sizes = cfg.task_sizes(len(tasks))
    swarms = [_new_swarm(t, n, rng, pso) for t, n in zip(tasks, sizes)]
    for sw in swarms:
        _evaluate_rows(sw, range(len(sw)), evaluate)
        if pso:
            _refresh_pbest(sw)
    return MultiSwarm(swarms, tasks, rng)


def _cso_step(ms: MultiSwarm, cfg: AlgorithmConfig, evaluate) -> None:
    rng = ms.rng
    n_tasks = len(ms.swarms)
    pairs = [pairwise_compete(sw.fitness, rng) for sw in ms.swarms]

    changed = [set() for _ in ms.swarms]
    for i, sw in enumerate(ms.swarms):
        winners, losers = pairs[i]
        mean = sw.mean_position
        others = [k for k in range(n_tasks) if k != i]
        for w, l in zip(winners, losers):
            u = rng.random()
            r = rng.random(3)
            plain = (
                cfg.variant is Variant.EMT_noKT
                or cfg.variant is Variant.CSO_FS_single_task
                or u < cfg.p_trans
                or not others
            )
            if plain:
                x, v = cso_plain_update(
                    sw.positions[l], sw.velocities[l], sw.positions[w], mean, r, cfg.phi
                )
            else:
                if cfg.variant is Variant.MF_CSO_R:
                    chosen = [others[rng.integers(len(others))]]
                else:
                    chosen = others
                sources = []
                for k in chosen:
                    src_winners = pairs[k][0]
                    pick = src_winners[rng.integers(src_winners.size)]
                    sources.append((ms.tasks[k], ms.swarms[k].positions[pick]))
                agg = aggregate_winner(sw.task, sources, sw.positions[l], ms.overlaps)
                x, v = cso_transfer_update(
                    sw.positions[l], sw.velocities[l], sw.positions[w], agg, r
                )
            sw.positions[l], sw.velocities[l] = x, v
            changed[i].add(int(l))

    for i, sw in enumerate(ms.swarms):
        rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / sw.task.dim
        for w in pairs[i][0]:
            mutated = polynomial_mutation(sw.positions[w], rng, cfg.eta_m, rate)
            if not np.array_equal(mutated, sw.positions[w]):
                sw.positions[w] = mutated
                changed[i].add(int(w))

    for sw, rows in zip(ms.swarms, changed):
        _evaluate_rows(sw, sorted(rows), evaluate)


def _pso_step(ms: MultiSwarm, cfg: AlgorithmConfig, evaluate) -> None:
    rng = ms.rng
    w_inertia = PSO_W_START - PSO_W_DROP * (ms.generation / max(cfg.iterations, 1))
    gbests = [sw.best()[1].position for sw in ms.swarms]
    n_tasks = len(ms.swarms)
    for i, sw in enumerate(ms.swarms):
        others = [k for k in range(n_tasks) if k != i]
        for p in range(len(sw)):
            u = rng.random()
            r = rng.random(3)
            x, v = sw.positions[p], sw.velocities[p]
            v = (
                w_inertia * v
                + PSO_ACCEL * r[0] * (sw.pbest_positions[p] - x)
                + PSO_ACCEL * r[1] * (gbests[i] - x)
            )
            if others and u < cfg.p_trans:
                k = others[rng.integers(len(others))]
                guide = aggregate_winner(sw.task, [(ms.tasks[k], gbests[k])], x, ms.overlaps)
                v = v + PSO_ACCEL * r[2] * (guide - x)
            v = np.clip(v, -1.0, 1.0)
            sw.positions[p], sw.velocities[p] = np.clip(x + v, 0.0, 1.0), v
        _evaluate_rows(sw, range(len(sw)), evaluate)
        _refresh_pbest(sw)


def step_generation(ms: MultiSwarm, cfg: AlgorithmConfig, evaluate) -> MultiSwarm:
    """Advance every swarm by one generation in place."""
    if cfg.variant is Variant.MF_PSO:
        _pso_step(ms, cfg, evaluate)
    else:
        _cso_step(ms, cfg, evaluate)
    ms.generation += 1
    return ms


def select_global_best(ms: MultiSwarm) -> tuple[int, Particle]:
    """Minimum fitness over all tasks; ties go to the lower task, then particle index."""
    best_task, best = 0, None
    for t, sw in enumerate(ms.swarms):
        _, p = sw.best()
        if best is None or p.fitness < best.fitness:
            best_task, best = t, p
    return best_task, best


def _seeds(seed) -> tuple[int, np.random.Generator]:
    fold_ss, evo_ss = np.random.SeedSequence(seed).spawn(2)
    return int(fold_ss.generate_state(1)[0]), np.random.default_rng(evo_ss)


def build_tasks(cfg: AlgorithmConfig, train: Dataset) -> TaskSet:
    if cfg.variant in SINGLE_TASK_VARIANTS or not cfg.filters:
        return single_task(train.n_features)
    return generate_tasks(train, cfg.filters, cfg.relieff)


def run(cfg: AlgorithmConfig, train: Dataset, tasks: TaskSet | None = None,
        callback=None) -> RunResult:
    """Optimise feature subsets on a normalised training set.

    ``callback(ms)`` is called after initialisation and after every
    generation; it must not touch ``ms.rng``.
    """
    if train.n_classes < 2:
        raise DataError("need at least two classes")
    start = time.perf_counter()
    fold_seed, rng = _seeds(cfg.seed)
    folds = stratified_kfold(train.labels, cfg.inner_folds, fold_seed)
    evaluate = FitnessEvaluator(train, folds, cfg.delta, cfg.alpha)
    if tasks is None:
        tasks = build_tasks(cfg, train)
    if cfg.population < 2 * len(tasks):
        raise DataError(f"population {cfg.population} too small for {len(tasks)} tasks")

    if cfg.variant is Variant.FULL_no_selection:
        full = tasks[0]
        pos = np.ones(full.dim)
        f, e, s = evaluate(full, pos)
        best = Particle(pos, np.zeros_like(pos), f, e, s)
        return RunResult(
            [best], 0, [full.name], [full.dim], full.feature_indices.copy(),
            train.feature_ids[full.feature_indices], f, e, np.array([[f]]),
            evaluate.evaluations, time.perf_counter() - start,
        )

    ms = init_multiswarm(tasks, cfg, rng, evaluate)
    trace = [[sw.best()[1].fitness for sw in ms.swarms]]
    if callback is not None:
        callback(ms)
    for _ in range(cfg.iterations):
        step_generation(ms, cfg, evaluate)
        trace.append([sw.best()[1].fitness for sw in ms.swarms])
        if callback is not None:
            callback(ms)

    best_task, best = select_global_best(ms)
    task = tasks[best_task]
    selected = task.feature_indices[decode_mask(best.position, cfg.delta).bits]
    return RunResult(
        best=[sw.best()[1] for sw in ms.swarms],
        best_task=best_task,
        task_names=[t.name for t in tasks],
        task_sizes=[t.dim for t in tasks],
        selected=selected,
        selected_ids=train.feature_ids[selected],
        fitness=best.fitness,
        error=best.error,
        trace=np.array(trace),
        evaluations=evaluate.evaluations,
        wall_time=time.perf_counter() - start,
    )
