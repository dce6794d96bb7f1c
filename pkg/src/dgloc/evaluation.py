"""Tolerance-based matching of predictions to ground truth and P/R/F1.

A prediction can match a ground-truth event only if both share the scene
and class and both boundaries land within the frame tolerance.  Matching is
one-to-one and greedy: predictions in descending peak order each take the
eligible unmatched event with the smallest combined boundary error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .domain import AnnotationEvent, Prediction, ValidationError


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    matched: tuple[tuple[AnnotationEvent, Prediction], ...]


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float


def tolerance_frames(fps: float, tolerance_s: float) -> int:
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    return int(round(tolerance_s * fps))


def match(
    gts: Sequence[AnnotationEvent],
    preds: Sequence[Prediction],
    fps: float,
    tolerance_s: float = 1.0,
) -> MatchResult:
    """Greedy one-to-one matching under the boundary tolerance.

    Eligibility: same scene and class, |start error| and |end error| both
    <= round(tolerance_s * fps) frames.  Predictions are visited in
    descending peak order (earlier start first on ties); each takes the
    eligible unmatched event minimizing |start error| + |end error|
    (earliest event on ties).
    """
    tol = tolerance_frames(fps, tolerance_s)
    ranked = sorted(
        preds,
        key=lambda p: (
            -p.peak_prob,
            p.start_frame,
            p.end_frame,
            p.class_id,
            p.scene_id,
        ),
    )
    unmatched = list(gts)
    pairs = []
    for p in ranked:
        best = None
        best_key = None
        for g in unmatched:
            if g.scene_id != p.scene_id or g.class_id != p.class_id:
                continue
            ds = abs(p.start_frame - g.start_frame)
            de = abs(p.end_frame - g.end_frame)
            if ds > tol or de > tol:
                continue
            key = (ds + de, g.start_frame, g.end_frame)
            if best_key is None or key < best_key:
                best, best_key = g, key
        if best is not None:
            unmatched.remove(best)
            pairs.append((best, p))
    tp = len(pairs)
    return MatchResult(
        tp=tp, fp=len(preds) - tp, fn=len(gts) - tp, matched=tuple(pairs)
    )


def metrics(result: MatchResult) -> Metrics:
    """P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); 0 on zero denominators."""
    tp, fp, fn = result.tp, result.fp, result.fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return Metrics(precision=precision, recall=recall, f1=f1)


def evaluate(
    gts: Sequence[AnnotationEvent],
    preds: Sequence[Prediction],
    fps: float,
    tolerance_s: float = 1.0,
) -> tuple[MatchResult, Metrics]:
    result = match(gts, preds, fps, tolerance_s)
    return result, metrics(result)


def per_class_results(
    gts: Sequence[AnnotationEvent],
    preds: Sequence[Prediction],
    fps: float,
    tolerance_s: float = 1.0,
) -> dict[int, tuple[MatchResult, Metrics]]:
    """Per-class breakdown over all classes present in either list."""
    classes = sorted(
        {g.class_id for g in gts} | {p.class_id for p in preds}
    )
    out = {}
    for c in classes:
        out[c] = evaluate(
            [g for g in gts if g.class_id == c],
            [p for p in preds if p.class_id == c],
            fps,
            tolerance_s,
        )
    return out
