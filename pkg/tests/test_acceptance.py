"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

import oracles
from conftest import random_dataset
from mfcso.data import min_max_apply, min_max_fit, stratified_kfold
from mfcso.engine import (
    AlgorithmConfig,
    FitnessEvaluator,
    Variant,
    build_tasks,
    fitness_value,
    init_multiswarm,
    pairwise_compete,
    run,
    step_generation,
)
from mfcso.filters import (
    FeatureWeights,
    Filter,
    ReliefFParams,
    knee_select,
    pcc_weights,
    relieff_weights,
    tv_weights,
)
from mfcso.harness import ExperimentConfig, SyntheticSpec, run_experiment, synth_dataset
from mfcso.knn import balanced_error_rate, masked_cv_error
from mfcso.stats import wilcoxon_rank_sum

SEEDS = range(10)
SUITE_ALG = AlgorithmConfig(population=80, iterations=30)
# 5 outer folds keep 80 training samples per fold out of H = 100
SUITE_FOLDS = 5
ALPHA = 0.999999


def test_filter_oracles(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(50):
        c = int(rng.integers(2, 4))
        d = random_dataset(rng, int(rng.integers(2 * c, 31)), int(rng.integers(1, 11)), c)
        rows, labels = d.features.tolist(), d.labels.tolist()
        cols = list(zip(*rows))
        pairs = [
            (relieff_weights(d, ReliefFParams(h=10)).weights, oracles.relieff(rows, labels, 10)),
            (tv_weights(d).weights, [oracles.tv(col) for col in cols]),
            (pcc_weights(d).weights, [oracles.pcc(col, labels) for col in cols]),
        ]
        for got, want in pairs:
            want = np.asarray(want)
            rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-12)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    criterion(1, "filter oracle equivalence", ok,
              f"max rel err {worst:.2e}, {elapsed:.2f} s for 50 datasets")
    assert ok


def test_knee_oracle(criterion):
    rng = np.random.default_rng(7)
    agree = 0
    for i in range(100):
        n = int(rng.integers(2, 60))
        scores = rng.exponential(size=n) ** rng.uniform(0.5, 4)
        if i % 4 == 0:  # repeated values exercise the tie rules
            scores = np.round(scores, 1)
        order = np.argsort(-scores, kind="stable")
        k = oracles.knee(scores[order].tolist())
        want = sorted(order[: k + 1].tolist())
        agree += knee_select(FeatureWeights(Filter.TV, scores)).tolist() == want
    criterion(2, "knee oracle", agree == 100, f"{agree}/100 curves agree")
    assert agree == 100


def test_pooled_error_oracle(criterion):
    rng = np.random.default_rng(99)
    agree = 0
    for i in range(50):
        c = int(rng.integers(2, 4))
        d = random_dataset(rng, int(rng.integers(4 * c, 40)), int(rng.integers(1, 9)), c)
        mask = rng.random(d.n_features) < 0.5
        mask[rng.integers(d.n_features)] = True
        folds = stratified_kfold(d.labels, 5, i)
        want = oracles.pooled_cv_error(d.features.tolist(), d.labels.tolist(),
                                       folds.folds.tolist(), np.flatnonzero(mask).tolist())
        agree += masked_cv_error(d, mask, folds) == want
    cases = [
        balanced_error_rate([0, 1, 2, 1], [0, 1, 2, 1], 3).error == 0.0,
        balanced_error_rate([1, 1, 0], [0, 0, 1], 2).error == 1.0,
        balanced_error_rate([0, 0, 0, 0], [0, 0, 1, 1], 2).error == 0.5,
    ]
    ok = agree == 50 and all(cases)
    criterion(3, "1-NN pooled balanced error", ok,
              f"{agree}/50 exact matches, {sum(cases)}/3 arithmetic cases")
    assert ok


def test_alpha_dominance(criterion):
    rng = np.random.default_rng(3)
    violations = checked = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 100_001))
        e1 = rng.random()
        # half the pairs sit just past the 1e-4 gap
        e2 = e1 + rng.choice([-1, 1]) * rng.uniform(1e-4, 2e-4) if rng.random() < 0.5 else rng.random()
        e2 = min(max(e2, 0.0), 1.0)
        if abs(e1 - e2) < 1e-4:
            continue
        s1, s2 = rng.integers(0, n + 1, 2)
        checked += 1
        f1, f2 = fitness_value(e1, s1, n, ALPHA), fitness_value(e2, s2, n, ALPHA)
        violations += (f1 < f2) != (e1 < e2)
    ok = violations == 0
    criterion(4, "alpha dominance", ok, f"{violations} violations in {checked} pairs")
    assert ok


def _engine_setup(rate):
    spec = SyntheticSpec(n_features=20, n_informative=4, n_samples=60, seed=5)
    data, _ = synth_dataset(spec)
    data = min_max_apply(min_max_fit(data), data)
    cfg = AlgorithmConfig(population=80, iterations=0, mutation_rate=rate, inner_folds=5)
    ev = FitnessEvaluator(data, stratified_kfold(data.labels, 5, 0), cfg.delta, cfg.alpha)
    ms = init_multiswarm(build_tasks(cfg, data), cfg, np.random.default_rng(1), ev)
    return cfg, ev, ms


def test_engine_invariants(criterion):
    bounds = winners_moved = regressions = updates = 0
    # default mutation: feasibility only
    cfg, ev, ms = _engine_setup(None)
    while updates < 10_000:
        step_generation(ms, cfg, ev)
        updates += sum(len(sw) // 2 for sw in ms.swarms)
        bounds += sum(int(np.any((sw.positions < 0) | (sw.positions > 1))) for sw in ms.swarms)
    # mutation off: winners fixed, per-task best never worse
    cfg, ev, ms = _engine_setup(0.0)
    prev = [sw.fitness.min() for sw in ms.swarms]
    for gen in range(max(30, 10_000 // 40)):
        probe = np.random.default_rng()
        probe.bit_generator.state = ms.rng.bit_generator.state
        winners = [pairwise_compete(sw.fitness, probe)[0] for sw in ms.swarms]
        before = [sw.positions.copy() for sw in ms.swarms]
        step_generation(ms, cfg, ev)
        for sw, w, b in zip(ms.swarms, winners, before):
            winners_moved += int(not np.array_equal(sw.positions[w], b[w]))
            bounds += int(np.any((sw.positions < 0) | (sw.positions > 1)))
        cur = [sw.fitness.min() for sw in ms.swarms]
        if gen < 30:
            regressions += sum(c > p for c, p in zip(cur, prev))
        prev = cur
    ok = bounds == winners_moved == regressions == 0
    criterion(5, "engine invariants", ok,
              f"{updates}+ loser updates; out-of-bounds {bounds}, winners moved {winners_moved}, "
              f"best regressions {regressions}")
    assert ok


def test_reduction_identities(criterion):
    data, _ = synth_dataset(SyntheticSpec(n_features=60, n_informative=5, n_samples=40, seed=3))
    data = min_max_apply(min_max_fit(data), data)
    same_a = same_b = 0
    for seed in range(3):
        base = dict(population=40, iterations=15, inner_folds=5, seed=seed)
        a1 = run(AlgorithmConfig(p_trans=1.0, **base), data)
        a2 = run(AlgorithmConfig(variant=Variant.EMT_noKT, **base), data)
        same_a += a1.trace.tobytes() == a2.trace.tobytes()
        b1 = run(AlgorithmConfig(filters=(), **base), data)
        b2 = run(AlgorithmConfig(variant=Variant.CSO_FS_single_task, **base), data)
        same_b += b1.trace.tobytes() == b2.trace.tobytes()
    ok = same_a == same_b == 3
    criterion(6, "reduction identities", ok,
              f"p_trans=1 vs EMT_noKT {same_a}/3, single-task vs CSO-FS {same_b}/3 bitwise")
    assert ok


def test_parallel_determinism(criterion, tmp_path):
    outputs = {}
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}.json"
        env = dict(os.environ, MFCSO_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "mfcso", "experiment", "--synthetic", "--pop", "80",
             "--iters", "30", "--folds", "2", "--runs", "1", "--trace", "--out", str(out)],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs[threads] = out.read_bytes() + (tmp_path / f"t{threads}_trace.csv").read_bytes()
    ok = outputs["1"] == outputs["8"]
    criterion(7, "determinism under parallelism", ok,
              f"MFCSO_THREADS=1 vs 8, {len(outputs['1'])} bytes compared")
    assert ok


@pytest.fixture(scope="module")
def suite():
    """Per seed: mean test error, mean size, mean informative hits, wall time."""
    out = {}
    for variant in (Variant.MF_CSO, Variant.FULL_no_selection, Variant.EMT_noKT,
                    Variant.MF_CSO_R):
        rows = []
        for seed in SEEDS:
            spec = SyntheticSpec(n_features=500, n_informative=10, n_samples=100, n_classes=2,
                                 seed=seed)
            _, informative = synth_dataset(spec)
            cfg = ExperimentConfig(AlgorithmConfig(**{**SUITE_ALG.__dict__, "variant": variant}),
                                   synthetic=spec, outer_folds=SUITE_FOLDS, runs=1,
                                   base_seed=seed)
            start = time.perf_counter()
            rep = run_experiment(cfg, workers=1)
            took = time.perf_counter() - start
            hits = np.mean([len(set(r.selected) & set(informative.tolist()))
                            for r in rep.records])
            rows.append((rep.record_errors().mean(), rep.aggregates["mean_size"], hits, took))
        out[variant] = np.array(rows)
    return out


def test_synthetic_recovery(criterion, suite):
    mf, full = suite[Variant.MF_CSO], suite[Variant.FULL_no_selection]
    med_size, med_err, full_err = np.median(mf[:, 1]), np.median(mf[:, 0]), np.median(full[:, 0])
    recovered = int(np.sum(mf[:, 2] >= 5))
    slowest = mf[:, 3].max()
    ok = med_size < 250 and med_err <= full_err and recovered >= 7 and slowest < 60
    criterion(8, "synthetic recovery", ok,
              f"median size {med_size:.1f} vs 500, median error {med_err:.3f} vs FULL "
              f"{full_err:.3f}, >=5 informative in {recovered}/10 seeds, "
              f"slowest seed {slowest:.1f} s")
    assert ok


def test_ablation_direction(criterion, suite):
    mf = suite[Variant.MF_CSO][:, 0]
    detail, ok = [], True
    for other in (Variant.EMT_noKT, Variant.MF_CSO_R):
        err = suite[other][:, 0]
        wins = int(np.sum(mf <= err))
        p = wilcoxon_rank_sum(mf, err).p_value
        ok &= wins >= 6
        detail.append(f"vs {other.value} {wins}/10 win-or-tie, rank-sum p={p:.3f}")
    criterion(9, "ablation direction", ok, "; ".join(detail))
    assert ok


def test_rank_sum_exactness(criterion):
    rng = np.random.default_rng(8)
    worst = 0.0
    for n in range(3, 9):
        for m in range(3, 9):
            for trial in range(3):
                if trial == 2:
                    a, b = rng.integers(0, 3, n).astype(float), rng.integers(0, 3, m).astype(float)
                else:
                    a, b = rng.random(n), rng.random(m) + 0.3 * trial
                want = oracles.exact_rank_sum_p(a.tolist(), b.tolist())
                worst = max(worst, abs(wilcoxon_rank_sum(a, b).p_value - want))
    big = wilcoxon_rank_sum(np.arange(1, 11), np.arange(11, 21))
    ok = worst <= 0.01 and big.p_value < 0.001
    criterion(10, "rank-sum correctness", ok,
              f"max |p - exact| {worst:.1e} over 3<=n,m<=8; [1..10] vs [11..20] p={big.p_value:.2e}")
    assert ok
