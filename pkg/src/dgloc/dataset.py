"""Balanced (class, view) mini-batch sampling and a synthetic scene generator.

The generator stands in for a video backbone at desk scale: each scene
performs every non-background class exactly once in random order, separated
by background gaps.  Per-frame features are class prototype vectors plus
Gaussian noise, drawn independently per camera view; a segment's feature is
the mean of its frame features, so segments straddling an action boundary
carry a convex mixture of prototypes -- the situation density-guided
smoothing is designed for.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import (
    AnnotationEvent,
    FrameLabelTimeline,
    PipelineConfig,
    SegmentFeatureRecord,
    ValidationError,
)

log = logging.getLogger(__name__)

# frames of background required between consecutive synthetic events
MIN_EVENT_GAP = 1


@dataclass(frozen=True)
class TrainingIndex:
    """Per-(class, view) pools of segment record indices.

    A segment belongs to the pool of its majority label.  ``record_counts``
    caches each record's per-class frame counts (rows sum to the segment
    length) and ``record_labels`` the corresponding majority labels.
    """

    pools: dict[tuple[int, int], list[int]]
    record_counts: np.ndarray
    record_labels: np.ndarray

    def cells(self) -> list[tuple[int, int]]:
        return sorted(self.pools.keys())


def _window_counts(
    labels: np.ndarray, starts: np.ndarray, t_c: int, n_classes: int
) -> np.ndarray:
    """Per-class frame counts for many windows of one timeline (exact integers)."""
    if labels.size and labels.max() >= n_classes:
        raise ValidationError(
            f"label {int(labels.max())} exceeds n_classes {n_classes}"
        )
    one_hot = np.zeros((len(labels) + 1, n_classes), dtype=np.int64)
    one_hot[np.arange(1, len(labels) + 1), labels] = 1
    prefix = np.cumsum(one_hot, axis=0)
    return prefix[starts + t_c] - prefix[starts]


def build_index(
    records: Sequence[SegmentFeatureRecord],
    timelines: dict[int, FrameLabelTimeline],
    config: PipelineConfig,
) -> TrainingIndex:
    """Assign every record to the (majority_label, view_id) pool."""
    t_c = config.segment_len
    n_c = config.n_classes
    counts = np.zeros((len(records), n_c), dtype=np.int64)
    by_scene: dict[int, list[int]] = {}
    for i, rec in enumerate(records):
        by_scene.setdefault(rec.scene_id, []).append(i)
    for scene_id, idxs in by_scene.items():
        timeline = timelines.get(scene_id)
        if timeline is None:
            raise ValidationError(f"no timeline for scene {scene_id}")
        starts = np.array([records[i].start_frame for i in idxs], dtype=np.int64)
        if starts.size and (starts.min() < 0 or starts.max() + t_c > len(timeline)):
            raise ValidationError(
                f"scene {scene_id}: segment window outside the timeline"
            )
        counts[idxs] = _window_counts(np.asarray(timeline.labels), starts, t_c, n_c)
    labels = counts.argmax(axis=1)  # first max == smallest class id on ties
    pools: dict[tuple[int, int], list[int]] = {}
    for i, rec in enumerate(records):
        pools.setdefault((int(labels[i]), rec.view_id), []).append(i)
    return TrainingIndex(pools=pools, record_counts=counts, record_labels=labels)


def sample_batch(
    index: TrainingIndex, k: int, rng: np.random.Generator
) -> list[int]:
    """Draw exactly k record indices from every non-empty (class, view) pool.

    Pools smaller than k are sampled with replacement so the batch
    composition stays exact; empty cells contribute nothing and are
    reported through the logger.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if not index.pools or all(not p for p in index.pools.values()):
        raise ValidationError("all (class, view) pools are empty")
    batch: list[int] = []
    empty = [cell for cell, pool in sorted(index.pools.items()) if not pool]
    if empty:
        log.warning("empty (class, view) pools skipped: %s", empty)
    for cell in index.cells():
        pool = index.pools[cell]
        if not pool:
            continue
        pool_arr = np.asarray(pool)
        picks = rng.choice(pool_arr, size=k, replace=len(pool) < k)
        batch.extend(int(p) for p in picks)
    return batch


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic scene/feature generator.

    ``prototypes`` holds one feature-space vector per class (background
    included, row 0).  ``boundary_ramp`` > 1 linearly blends prototypes
    across that many frames around each label switch, producing the
    ambiguous boundary segments used in the smoothing ablation.
    """

    n_scenes: int
    scene_len: int
    n_views: int
    prototypes: np.ndarray
    noise_sigma: float
    event_len_range: tuple[int, int]
    seed: int
    boundary_ramp: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.event_len_range
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad event length range [{lo}, {hi}]")
        if self.n_scenes < 1 or self.n_views < 1:
            raise ValidationError("need at least one scene and one view")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        proto = np.asarray(self.prototypes)
        if proto.ndim != 2:
            raise ValidationError("prototypes must be a (n_classes, N_f) matrix")


def random_prototypes(
    n_classes: int, n_f: int, rng: np.random.Generator
) -> np.ndarray:
    """Unit-norm random class prototypes (background row 0 included).

    Values are rounded to float32 precision so that zero-noise segment
    features survive the float32 store cast without rounding drift.
    """
    proto = rng.standard_normal((n_classes, n_f))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)
    return proto.astype(np.float32).astype(np.float64)


def _place_events(
    scene_id: int,
    order: np.ndarray,
    lengths: np.ndarray,
    scene_len: int,
    rng: np.random.Generator,
) -> list[AnnotationEvent]:
    n_events = len(order)
    needed = int(lengths.sum()) + MIN_EVENT_GAP * (n_events - 1)
    slack = scene_len - needed
    if slack < 0:
        raise ValidationError(
            f"scene_len {scene_len} too short for {n_events} events "
            f"needing {needed} frames"
        )
    extra = rng.multinomial(slack, np.full(n_events + 1, 1.0 / (n_events + 1)))
    events = []
    cursor = int(extra[0])
    for j, (cls, length) in enumerate(zip(order, lengths)):
        events.append(
            AnnotationEvent(scene_id, int(cls), cursor, cursor + int(length) - 1)
        )
        cursor += int(length)
        if j < n_events - 1:
            cursor += MIN_EVENT_GAP + int(extra[j + 1])
    return events


def _window_means(x: np.ndarray, width: int) -> np.ndarray:
    """Mean over every length-``width`` window along axis 0, via prefix sums."""
    prefix = np.zeros((x.shape[0] + 1, x.shape[1]))
    np.cumsum(x, axis=0, out=prefix[1:])
    return (prefix[width:] - prefix[:-width]) / width


def _ramp_blend(base: np.ndarray, ramp: int) -> np.ndarray:
    """Moving average of the prototype sequence: linear ramps at label switches."""
    half = ramp // 2
    padded = np.concatenate(
        [np.repeat(base[:1], half, axis=0), base, np.repeat(base[-1:], half, axis=0)]
    )
    return _window_means(padded, 2 * half + 1)


def generate_synthetic(
    spec: SyntheticSpec, config: PipelineConfig
) -> tuple[
    list[SegmentFeatureRecord], list[AnnotationEvent], dict[int, FrameLabelTimeline]
]:
    """Generate feature records, annotations and timelines for all scenes.

    Fully deterministic given ``spec.seed``: a single generator drives event
    placement and per-view noise in a fixed order.
    """
    proto = np.asarray(spec.prototypes, dtype=np.float64)
    n_classes = config.n_classes
    if proto.shape != (n_classes, config.feature_dim):
        raise ValidationError(
            f"prototypes shape {proto.shape} != "
            f"({n_classes}, {config.feature_dim})"
        )
    t_c = config.segment_len
    if spec.scene_len < t_c:
        raise ValidationError("scene_len shorter than one segment")
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.event_len_range

    records: list[SegmentFeatureRecord] = []
    annotations: list[AnnotationEvent] = []
    timelines: dict[int, FrameLabelTimeline] = {}
    action_classes = np.arange(1, n_classes)
    for scene_id in range(spec.n_scenes):
        order = rng.permutation(action_classes)
        lengths = rng.integers(lo, hi + 1, size=len(order))
        events = _place_events(scene_id, order, lengths, spec.scene_len, rng)
        annotations.extend(events)
        labels = np.zeros(spec.scene_len, dtype=np.int64)
        for ev in events:
            labels[ev.start_frame : ev.end_frame + 1] = ev.class_id
        timelines[scene_id] = FrameLabelTimeline(scene_id, labels)

        base = proto[labels]
        if spec.boundary_ramp > 1:
            base = _ramp_blend(base, spec.boundary_ramp)
        starts = np.arange(0, spec.scene_len - t_c + 1, config.stride)
        for view_id in range(spec.n_views):
            frame_feats = base
            if spec.noise_sigma > 0:
                frame_feats = base + spec.noise_sigma * rng.standard_normal(
                    base.shape
                )
            seg_feats = _window_means(frame_feats, t_c)[starts].astype(
                np.float32
            )
            for row, start in enumerate(starts):
                records.append(
                    SegmentFeatureRecord(
                        scene_id=scene_id,
                        view_id=view_id,
                        start_frame=int(start),
                        features=seg_feats[row],
                    )
                )
    return records, annotations, timelines
