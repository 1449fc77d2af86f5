"""Figures written next to report files: convergence curves and knee plots."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .filters import FeatureWeights, knee_index  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.1),
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_convergence(traces, task_names, path, title: str = "") -> None:
    """Best fitness per task against generation.

    ``traces`` is one (generations + 1, tasks) array or a list of them; several
    traces are averaged with a min/max band.
    """
    arr = np.asarray(traces, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    gens = np.arange(arr.shape[1])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for t, name in enumerate(task_names):
            series = arr[:, :, t]
            line, = ax.plot(gens, series.mean(axis=0), label=name, lw=1.4)
            if arr.shape[0] > 1:
                ax.fill_between(gens, series.min(axis=0), series.max(axis=0),
                                color=line.get_color(), alpha=0.15, lw=0)
        ax.set_xlabel("generation")
        ax.set_ylabel("best fitness")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_knee(weights: dict, path) -> None:
    """Sorted ranking scores per filter with the knee cut marked."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(weights), figsize=(3.0 * len(weights), 2.6), squeeze=False)
        for ax, (method, fw) in zip(axes[0], weights.items()):
            fw: FeatureWeights
            curve = np.sort(fw.scores())[::-1]
            k = knee_index(curve)
            ax.plot(np.arange(curve.size), curve, lw=1.2)
            ax.plot([0, curve.size - 1], [curve[0], curve[-1]], ls="--", lw=0.8, color="0.5")
            ax.axvline(k, color="C3", lw=0.8)
            ax.set_title(f"{method.value} (keep {k + 1})")
            ax.set_xlabel("rank")
        axes[0][0].set_ylabel("score")
        _save(fig, path)
