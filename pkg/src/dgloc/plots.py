"""Figure rendering for the CLI report paths.

All figures go straight to PNG files through the Agg backend, so rendering
works headless and the bytes depend only on the data and library versions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .domain import BACKGROUND_CLASS, Prediction
from .evaluation import Metrics

DPI = 100


def _save(fig: "plt.Figure", path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_smoothing_bars(
    counts_list: Sequence[Sequence[int]],
    betas: Sequence[float],
    probs_grid: Sequence[Sequence[np.ndarray]],
    path: str | Path,
) -> Path:
    """Grid of target-distribution bar charts: one row per counts vector,
    one column per temperature."""
    n_rows, n_cols = len(counts_list), len(betas)
    fig, axes = plt.subplots(
        n_rows,
        n_cols,
        figsize=(3.0 * n_cols, 2.2 * n_rows),
        squeeze=False,
        sharey=True,
    )
    for r, counts in enumerate(counts_list):
        for c, beta in enumerate(betas):
            ax = axes[r][c]
            probs = probs_grid[r][c]
            ax.bar(np.arange(len(probs)), probs, color="tab:blue")
            ax.set_ylim(0.0, 1.0)
            ax.set_title(
                f"counts={','.join(str(v) for v in counts)}  beta={beta:g}",
                fontsize=8,
            )
            if r == n_rows - 1:
                ax.set_xlabel("class")
            if c == 0:
                ax.set_ylabel("target prob")
    fig.tight_layout()
    return _save(fig, path)


def plot_scene_signals(
    scene_id: int,
    signals: np.ndarray,
    tau: float,
    path: str | Path,
    predictions: Sequence[Prediction] = (),
) -> Path:
    """Per-class probability signals for one scene, with the detection
    threshold and any predicted intervals overlaid."""
    fig, ax = plt.subplots(figsize=(10.0, 3.5))
    frames = np.arange(signals.shape[0])
    for c in range(signals.shape[1]):
        if c == BACKGROUND_CLASS:
            continue
        ax.plot(frames, signals[:, c], linewidth=0.8)
    ax.axhline(tau, color="black", linestyle="--", linewidth=0.8)
    for p in predictions:
        ax.axvspan(p.start_frame, p.end_frame, color="tab:gray", alpha=0.15)
    ax.set_xlim(0, signals.shape[0] - 1)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("frame")
    ax.set_ylabel("probability")
    ax.set_title(f"scene {scene_id}")
    fig.tight_layout()
    return _save(fig, path)


def plot_metrics_bars(
    per_class: Mapping[int, Metrics], path: str | Path
) -> Path:
    """Grouped precision/recall/F1 bars per class."""
    classes = sorted(per_class)
    x = np.arange(len(classes), dtype=np.float64)
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6.0, 0.55 * len(classes) + 2.0), 3.5))
    for i, (name, values) in enumerate(
        [
            ("precision", [per_class[c].precision for c in classes]),
            ("recall", [per_class[c].recall for c in classes]),
            ("f1", [per_class[c].f1 for c in classes]),
        ]
    ):
        ax.bar(x + (i - 1) * width, values, width=width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels([str(c) for c in classes])
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("class")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
