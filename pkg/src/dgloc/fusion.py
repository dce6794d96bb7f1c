"""Late fusion of segment probabilities into frame-level scene probabilities.

Each frame's class distribution is the flat mean over every (view, segment)
window that contains the frame.  Windows are sorted by start and reduced
with a prefix-sum table, so each frame is a difference of two prefix rows
divided by its coverage count.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Sequence

import numpy as np

from .domain import (
    SceneProbabilityMatrix,
    SegmentProbabilities,
    ValidationError,
)
from .parallel import parallel_map

log = logging.getLogger(__name__)


def fuse_scene(
    segments: Sequence[SegmentProbabilities],
    t_c: int,
    scene_len: int | None = None,
) -> SceneProbabilityMatrix:
    """Fuse one scene's windows; window at s covers frames [s, s+t_c-1].

    ``scene_len`` defaults to max start + t_c (the last covered frame + 1).
    Any frame in range covered by no window is an error.
    """
    if not segments:
        raise ValidationError("fuse_scene: no segments")
    if t_c < 1:
        raise ValidationError(f"t_c must be >= 1, got {t_c}")
    scene_id = segments[0].scene_id
    for s in segments:
        if s.scene_id != scene_id:
            raise ValidationError(
                f"mixed scenes in fuse_scene: {scene_id} and {s.scene_id}"
            )
    n_classes = len(segments[0].probs)
    starts = np.array([s.start_frame for s in segments], dtype=np.int64)
    probs = np.stack([s.probs for s in segments]).astype(np.float64)
    if probs.shape[1] != n_classes or probs.ndim != 2:
        raise ValidationError("inconsistent probability vector lengths")

    order = np.argsort(starts, kind="stable")
    starts = starts[order]
    probs = probs[order]
    if scene_len is None:
        scene_len = int(starts[-1]) + t_c

    # prefix[k] = sum of the first k windows; a frame's mean is then
    # (prefix[hi] - prefix[lo]) / (hi - lo), whose rounding error is only
    # the error of the hi - lo additions between the two rows
    prefix = np.zeros((len(segments) + 1, n_classes))
    np.cumsum(probs, axis=0, out=prefix[1:])

    frames = np.arange(scene_len, dtype=np.int64)
    lo = np.searchsorted(starts, frames - (t_c - 1), side="left")
    hi = np.searchsorted(starts, frames, side="right")
    count = hi - lo
    if np.any(count == 0):
        bad = int(frames[count == 0][0])
        raise ValidationError(
            f"scene {scene_id}: frame {bad} covered by no segment window"
        )
    fused = (prefix[hi] - prefix[lo]) / count[:, None]
    return SceneProbabilityMatrix(scene_id=scene_id, matrix=fused).validate()


def fuse_scenes(
    segments: Sequence[SegmentProbabilities],
    t_c: int,
    scene_lens: dict[int, int] | None = None,
    threads: int = 1,
) -> list[SceneProbabilityMatrix]:
    """Group segment records by scene and fuse each; sorted by scene id."""
    by_scene: dict[int, list[SegmentProbabilities]] = defaultdict(list)
    for s in segments:
        by_scene[s.scene_id].append(s)
    scene_ids = sorted(by_scene)

    def run(scene_id: int) -> SceneProbabilityMatrix:
        length = scene_lens.get(scene_id) if scene_lens else None
        return fuse_scene(by_scene[scene_id], t_c, length)

    out = parallel_map(run, scene_ids, threads)
    log.info("fused %d scenes", len(out))
    return out
