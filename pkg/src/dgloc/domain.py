"""Core data model shared by every pipeline stage.

Frame intervals are inclusive on both ends everywhere in this package:
an event spanning [start_frame, end_frame] has end - start + 1 frames.
Class 0 is reserved for the background (normal driving) class.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

ClassId = int

BACKGROUND_CLASS = 0


class ValidationError(ValueError):
    """Input data or configuration violates a documented invariant."""


class FormatError(ValidationError):
    """A file does not conform to its documented layout."""


class TrainingError(RuntimeError):
    """Training produced non-finite values and cannot continue."""


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters and constants used across the pipeline.

    Defaults follow the reference setup: 18 classes, 64-frame segments at
    stride 1, a 64-unit hidden layer trained with Adam (lr 5e-5, weight
    decay 5e-4), smoothing temperature 5, peak threshold 0.05 with a
    200-frame width gate, a 301-frame median filter, and IoU suppression
    at 0.5.  The frame rate is configurable because the 1-second boundary
    tolerance must be converted to frames.
    """

    n_classes: int = 18
    segment_len: int = 64
    stride: int = 1
    feature_dim: int = 2304
    fps: float = 30.0
    beta: float = 5.0
    epsilon: float = 0.1
    tau: float = 0.05
    min_peak_width: int = 200
    median_window: int = 301
    o_max: float = 0.5
    tolerance_s: float = 1.0
    learning_rate: float = 5e-5
    weight_decay: float = 5e-4
    hidden_dim: int = 64
    samples_per_class_per_view: int = 5
    epochs: int = 20
    batches_per_epoch: int = 10
    target_mode: str = "density"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        if self.segment_len < 1:
            raise ValidationError("segment_len must be >= 1")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError("epsilon must be in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError("tau must be in [0, 1]")
        if self.min_peak_width < 1:
            raise ValidationError("min_peak_width must be >= 1")
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValidationError("median_window must be odd and >= 1")
        if not 0.0 <= self.o_max <= 1.0:
            raise ValidationError("o_max must be in [0, 1]")
        if self.tolerance_s < 0:
            raise ValidationError("tolerance_s must be >= 0")
        if self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1")
        if self.samples_per_class_per_view < 1:
            raise ValidationError("samples_per_class_per_view must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batches_per_epoch < 1:
            raise ValidationError("batches_per_epoch must be >= 1")
        if self.target_mode not in ("density", "classic"):
            raise ValidationError("target_mode must be 'density' or 'classic'")

    def tolerance_frames(self) -> int:
        """Boundary tolerance in frames: round(tolerance_s * fps)."""
        return int(round(self.tolerance_s * self.fps))

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        """Return a copy with the given fields replaced (and re-validated)."""
        return replace(self, **kwargs)


@dataclass(frozen=True)
class AnnotationEvent:
    """One ground-truth action interval of a scene (frames inclusive)."""

    scene_id: int
    class_id: ClassId
    start_frame: int
    end_frame: int

    def __post_init__(self) -> None:
        if self.class_id == BACKGROUND_CLASS:
            raise ValidationError("annotation events cannot use the background class")
        if self.class_id < 0:
            raise ValidationError(f"negative class id {self.class_id}")
        if self.start_frame > self.end_frame:
            raise ValidationError(
                f"event start {self.start_frame} after end {self.end_frame}"
            )

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class FrameLabelTimeline:
    """Per-frame class labels for one scene; frames outside events are 0."""

    scene_id: int
    labels: np.ndarray  # int array, one entry per frame

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SegmentFeatureRecord:
    """Precomputed feature vector for one (scene, view, start-frame) segment.

    Features are float32, matching the on-disk storage precision; all
    arithmetic downstream promotes to float64.
    """

    scene_id: int
    view_id: int
    start_frame: int
    features: np.ndarray


@dataclass(frozen=True)
class SegmentProbabilities:
    """Class probabilities the classifier assigned to one segment."""

    scene_id: int
    view_id: int
    start_frame: int
    probs: np.ndarray  # float64, sums to 1 within 1e-9


@dataclass(frozen=True)
class SceneProbabilityMatrix:
    """Fused frame-level class probabilities for one scene (frames x classes)."""

    scene_id: int
    matrix: np.ndarray

    def validate(self) -> "SceneProbabilityMatrix":
        m = self.matrix
        if m.ndim != 2:
            raise ValidationError("scene probability matrix must be 2-D")
        if not np.all(np.isfinite(m)):
            raise ValidationError("scene probability matrix contains non-finite values")
        if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
            raise ValidationError("scene probabilities outside [0, 1]")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError("scene probability rows must sum to 1 within 1e-9")
        return self

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Prediction:
    """One localized action: class, inclusive frame interval, peak probability."""

    scene_id: int
    class_id: ClassId
    start_frame: int
    end_frame: int
    peak_prob: float

    def __post_init__(self) -> None:
        if self.start_frame > self.end_frame:
            raise ValidationError(
                f"prediction start {self.start_frame} after end {self.end_frame}"
            )
        if not 0.0 <= self.peak_prob <= 1.0:
            raise ValidationError(f"peak_prob {self.peak_prob} outside [0, 1]")

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


def frame_labels_from_annotations(
    events: Sequence[AnnotationEvent], scene_len: int
) -> FrameLabelTimeline:
    """Materialize interval annotations as one label per frame.

    Events must be pairwise non-overlapping and lie within
    [0, scene_len - 1]; frames not covered by any event get class 0.
    """
    if scene_len < 0:
        raise ValidationError("scene_len must be >= 0")
    scene_ids = {e.scene_id for e in events}
    if len(scene_ids) > 1:
        raise ValidationError(f"events from multiple scenes: {sorted(scene_ids)}")
    scene_id = scene_ids.pop() if scene_ids else 0

    labels = np.zeros(scene_len, dtype=np.int64)
    ordered = sorted(events, key=lambda e: e.start_frame)
    prev_end = -1
    for ev in ordered:
        if ev.start_frame < 0 or ev.end_frame >= scene_len:
            raise ValidationError(
                f"event [{ev.start_frame}, {ev.end_frame}] outside scene of "
                f"{scene_len} frames"
            )
        if ev.start_frame <= prev_end:
            raise ValidationError(
                f"overlapping events at frame {ev.start_frame} in scene {scene_id}"
            )
        labels[ev.start_frame : ev.end_frame + 1] = ev.class_id
        prev_end = ev.end_frame
    return FrameLabelTimeline(scene_id=scene_id, labels=labels)


def events_from_timeline(timeline: FrameLabelTimeline) -> list[AnnotationEvent]:
    """Recover interval annotations as maximal constant runs of non-zero labels.

    Inverse of :func:`frame_labels_from_annotations` for valid timelines.
    """
    labels = np.asarray(timeline.labels)
    events: list[AnnotationEvent] = []
    if len(labels) == 0:
        return events
    boundaries = np.flatnonzero(np.diff(labels) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries - 1, [len(labels) - 1]))
    for s, e in zip(starts, ends):
        cls = int(labels[s])
        if cls != BACKGROUND_CLASS:
            events.append(
                AnnotationEvent(timeline.scene_id, cls, int(s), int(e))
            )
    return events
