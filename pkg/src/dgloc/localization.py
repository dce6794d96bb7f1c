"""Frame-probability signals to event predictions.

Per class: median-filter the signal, find the highest peak, gate it by a
probability threshold and a minimum width, then place boundaries at the
steepest rise before the peak and the steepest fall after it.  Overlapping
predictions within a scene are then suppressed greedily by peak height.
"""

from __future__ import annotations

import logging
from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import (
    BACKGROUND_CLASS,
    PipelineConfig,
    Prediction,
    SceneProbabilityMatrix,
    ValidationError,
)
from .parallel import parallel_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeakDetection:
    class_id: int
    peak_frame: int
    peak_value: float
    start_frame: int
    end_frame: int

    def __post_init__(self) -> None:
        if not self.start_frame <= self.peak_frame <= self.end_frame:
            raise ValidationError(
                f"peak frame {self.peak_frame} outside "
                f"[{self.start_frame}, {self.end_frame}]"
            )


def median_filter(signal: Sequence[float], window: int) -> np.ndarray:
    """Running median over an edge-replicated window centered at each point.

    Maintains a sorted buffer updated by binary insertion/removal, one
    element in and one out per step.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise ValidationError("signal must be a non-empty 1-D sequence")
    if window < 1 or window % 2 == 0:
        raise ValidationError(f"window must be odd and >= 1, got {window}")
    if window > 2 * len(x):
        raise ValidationError(
            f"window {window} too large for signal of length {len(x)}"
        )
    if window == 1:
        return x.copy()
    pad = window // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    values = padded.tolist()
    buf = sorted(values[:window])
    out = np.empty(len(x))
    out[0] = buf[pad]
    for i in range(1, len(x)):
        del buf[bisect_left(buf, values[i - 1])]
        insort(buf, values[i - 1 + window])
        out[i] = buf[pad]
    return out


def detect_peak(
    signal: Sequence[float],
    config: PipelineConfig,
    class_id: int = 0,
) -> PeakDetection | None:
    """Locate the highest peak of a filtered signal, or None if gated out.

    The peak (earliest argmax) must reach tau, and the contiguous run of
    frames >= tau containing it must span at least min_peak_width frames.
    Boundaries come from forward differences d[t] = s[t+1] - s[t]: the
    start is one frame after the earliest steepest rise before the peak
    (frame 0 if the run begins there), the end is the latest steepest fall
    at or after the peak (the last frame if the run reaches it).
    """
    s = np.asarray(signal, dtype=np.float64)
    if s.ndim != 1 or len(s) < 2:
        raise ValidationError("signal must be 1-D with length >= 2")
    t_peak = int(np.argmax(s))
    peak_value = float(s[t_peak])
    if peak_value < config.tau:
        return None
    below = np.flatnonzero(s < config.tau)
    i = int(np.searchsorted(below, t_peak))
    run_start = int(below[i - 1]) + 1 if i > 0 else 0
    run_end = int(below[i]) - 1 if i < len(below) else len(s) - 1
    if run_end - run_start + 1 < config.min_peak_width:
        return None
    d = np.diff(s)
    if run_start == 0:
        start = 0
    else:
        start = int(np.argmax(d[:t_peak])) + 1
    if run_end == len(s) - 1:
        end = len(s) - 1
    else:
        tail = d[t_peak:]
        end = t_peak + (len(tail) - 1 - int(np.argmin(tail[::-1])))
    return PeakDetection(
        class_id=class_id,
        peak_frame=t_peak,
        peak_value=peak_value,
        start_frame=start,
        end_frame=end,
    )


def filtered_signals(
    matrix: SceneProbabilityMatrix, config: PipelineConfig
) -> np.ndarray:
    """Median-filtered per-class signals, same shape as the scene matrix."""
    out = np.empty_like(matrix.matrix)
    for c in range(matrix.matrix.shape[1]):
        out[:, c] = median_filter(matrix.matrix[:, c], config.median_window)
    return out


def localize_scene(
    matrix: SceneProbabilityMatrix,
    config: PipelineConfig,
    signals: np.ndarray | None = None,
) -> list[Prediction]:
    """At most one prediction per non-background class, ascending class id.

    ``signals`` lets a caller reuse already-filtered signals.
    """
    if signals is None:
        signals = filtered_signals(matrix, config)
    preds = []
    for c in range(matrix.matrix.shape[1]):
        if c == BACKGROUND_CLASS:
            continue
        det = detect_peak(signals[:, c], config, class_id=c)
        if det is not None:
            preds.append(
                Prediction(
                    scene_id=matrix.scene_id,
                    class_id=c,
                    start_frame=det.start_frame,
                    end_frame=det.end_frame,
                    peak_prob=det.peak_value,
                )
            )
    return preds


def temporal_iou(a: Prediction, b: Prediction) -> float:
    """Inclusive-interval IoU; [0, 99] vs [50, 149] gives 50/150."""
    if a.scene_id != b.scene_id:
        raise ValidationError(
            f"IoU across scenes {a.scene_id} and {b.scene_id}"
        )
    inter = max(
        0, min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1
    )
    union = a.length + b.length - inter
    return inter / union


def eliminate_overlaps(
    preds: Sequence[Prediction], o_max: float
) -> list[Prediction]:
    """Greedy suppression: keep a prediction iff its IoU with every
    higher-peak kept prediction is <= o_max.

    Ties on peak height prefer the smaller class id.  Output is sorted by
    (start, end, class_id) and has pairwise IoU <= o_max.
    """
    if not 0.0 <= o_max <= 1.0:
        raise ValidationError(f"o_max must be in [0, 1], got {o_max}")
    scenes = {p.scene_id for p in preds}
    if len(scenes) > 1:
        raise ValidationError(f"mixed scenes in eliminate_overlaps: {scenes}")
    ranked = sorted(
        preds,
        key=lambda p: (-p.peak_prob, p.class_id, p.start_frame, p.end_frame),
    )
    kept: list[Prediction] = []
    for p in ranked:
        if all(temporal_iou(p, q) <= o_max for q in kept):
            kept.append(p)
    return sorted(kept, key=lambda p: (p.start_frame, p.end_frame, p.class_id))


def localize_scenes(
    matrices: Sequence[SceneProbabilityMatrix],
    config: PipelineConfig,
    eop: bool = True,
    threads: int = 1,
) -> list[Prediction]:
    """Localize every scene, optionally suppressing overlaps per scene."""

    def run(matrix: SceneProbabilityMatrix) -> list[Prediction]:
        preds = localize_scene(matrix, config)
        return eliminate_overlaps(preds, config.o_max) if eop else preds

    out = []
    for preds in parallel_map(run, list(matrices), threads):
        out.extend(preds)
    log.info("localized %d predictions in %d scenes", len(out), len(matrices))
    return out
