"""Label-count statistics and smoothed target distributions.

Two target constructions are provided: classic uniform label smoothing of
the majority label, and density-guided smoothing, a temperature softmax
over the per-class frame counts of a segment.  Small temperatures approach
hard labels; large temperatures approach the uniform distribution.
"""

from __future__ import annotations

import numpy as np

from .domain import ClassId, FrameLabelTimeline, ValidationError


def count_labels(
    timeline: FrameLabelTimeline, start_frame: int, t_c: int, n_classes: int
) -> np.ndarray:
    """Count per-class frames in the window [start_frame, start_frame + t_c - 1].

    Returns an integer vector of length n_classes summing to t_c.
    """
    labels = np.asarray(timeline.labels)
    if start_frame < 0 or start_frame + t_c > len(labels):
        raise ValidationError(
            f"window [{start_frame}, {start_frame + t_c - 1}] outside scene of "
            f"{len(labels)} frames"
        )
    window = labels[start_frame : start_frame + t_c]
    if window.size and window.max() >= n_classes:
        raise ValidationError(
            f"label {int(window.max())} exceeds n_classes {n_classes}"
        )
    return np.bincount(window, minlength=n_classes).astype(np.int64)


def classic_smooth(y: ClassId, epsilon: float, n_classes: int) -> np.ndarray:
    """Uniformly smoothed one-hot target: (1 - eps) at y plus eps / N_c everywhere."""
    if not 0.0 <= epsilon < 1.0:
        raise ValidationError(f"epsilon {epsilon} outside [0, 1)")
    if not 0 <= y < n_classes:
        raise ValidationError(f"class {y} outside [0, {n_classes - 1}]")
    probs = np.full(n_classes, epsilon / n_classes, dtype=np.float64)
    probs[y] += 1.0 - epsilon
    return probs


def density_guided_smooth(counts: np.ndarray, beta: float) -> np.ndarray:
    """Temperature softmax over frame counts: exp(c_k / beta) normalized.

    Computed with max-subtraction so that small temperatures cannot
    overflow; the subtraction is exact for integer counts, so the result
    is invariant under shifting all counts by a constant.
    """
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValidationError("counts must be a non-empty 1-D vector")
    z = (counts - counts.max()) / beta
    e = np.exp(z)
    return e / e.sum()


def majority_label(counts: np.ndarray) -> ClassId:
    """Class with the most frames in the segment; ties go to the smallest id."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ValidationError("counts must be a non-empty 1-D vector")
    return int(np.argmax(counts))
