"""Feature selection by multitask competitive swarm optimization."""

from .data import (
    DataError,
    Dataset,
    FoldAssignment,
    NormalizationModel,
    load_dataset,
    min_max_apply,
    min_max_fit,
    stratified_kfold,
)
from .engine import AlgorithmConfig, RunResult, Variant, run
from .filters import ReliefFParams, TaskSet, generate_tasks, knee_select
from .harness import ExperimentConfig, SyntheticSpec, run_experiment, synth_dataset
from .stats import wilcoxon_rank_sum

__all__ = [
    "AlgorithmConfig",
    "DataError",
    "Dataset",
    "ExperimentConfig",
    "FoldAssignment",
    "NormalizationModel",
    "ReliefFParams",
    "RunResult",
    "SyntheticSpec",
    "TaskSet",
    "Variant",
    "generate_tasks",
    "knee_select",
    "load_dataset",
    "min_max_apply",
    "min_max_fit",
    "run",
    "run_experiment",
    "stratified_kfold",
    "synth_dataset",
    "wilcoxon_rank_sum",
]
