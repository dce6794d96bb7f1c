"""File formats: binary feature store, delimited text tables, config files.

All binary layouts are little-endian.  Text tables are comma-delimited with
'#' comment lines; integer fields round-trip losslessly and probabilities
are serialized with full precision (repr), well beyond the required six
significant digits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    AnnotationEvent,
    FormatError,
    PipelineConfig,
    Prediction,
    SceneProbabilityMatrix,
    SegmentFeatureRecord,
    SegmentProbabilities,
    ValidationError,
)

FEATURE_MAGIC = b"DGF1"
FEATURE_VERSION = 1

_HEADER_DTYPE = np.dtype(
    [
        ("version", "<u4"),
        ("n_f", "<u4"),
        ("t_c", "<u4"),
        ("n_records", "<u4"),
    ]
)


@dataclass(frozen=True)
class FeatureStoreHeader:
    version: int
    n_f: int
    t_c: int
    n_records: int


def _record_dtype(n_f: int) -> np.dtype:
    return np.dtype(
        [
            ("scene_id", "<u4"),
            ("view_id", "<u2"),
            ("start_frame", "<u4"),
            ("features", "<f4", (n_f,)),
        ]
    )


def write_feature_store(
    path: str | Path,
    records: Sequence[SegmentFeatureRecord],
    n_f: int,
    t_c: int,
) -> None:
    """Write segment features in the binary store layout."""
    arr = np.empty(len(records), dtype=_record_dtype(n_f))
    for i, rec in enumerate(records):
        feats = np.asarray(rec.features, dtype=np.float32)
        if feats.shape != (n_f,):
            raise ValidationError(
                f"record {i}: feature length {feats.shape} != store N_f {n_f}"
            )
        if not np.all(np.isfinite(feats)):
            raise ValidationError(f"record {i}: non-finite feature values")
        arr[i] = (rec.scene_id, rec.view_id, rec.start_frame, feats)
    header = np.array([(FEATURE_VERSION, n_f, t_c, len(records))], dtype=_HEADER_DTYPE)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(header.tobytes())
        fh.write(arr.tobytes())


def read_feature_store(
    path: str | Path,
) -> tuple[FeatureStoreHeader, list[SegmentFeatureRecord]]:
    """Read a binary feature store; bit-exact inverse of the writer."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic, not a feature store")
    if len(data) < 4 + _HEADER_DTYPE.itemsize:
        raise FormatError(f"{path}: truncated header")
    raw = np.frombuffer(data, dtype=_HEADER_DTYPE, count=1, offset=4)[0]
    header = FeatureStoreHeader(
        version=int(raw["version"]),
        n_f=int(raw["n_f"]),
        t_c=int(raw["t_c"]),
        n_records=int(raw["n_records"]),
    )
    if header.version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {header.version}")
    rec_dtype = _record_dtype(header.n_f)
    body = data[4 + _HEADER_DTYPE.itemsize :]
    expected = header.n_records * rec_dtype.itemsize
    if len(body) != expected:
        raise FormatError(
            f"{path}: body holds {len(body)} bytes, expected {expected} "
            f"for {header.n_records} records"
        )
    arr = np.frombuffer(body, dtype=rec_dtype)
    records = [
        SegmentFeatureRecord(
            scene_id=int(r["scene_id"]),
            view_id=int(r["view_id"]),
            start_frame=int(r["start_frame"]),
            features=r["features"].copy(),
        )
        for r in arr
    ]
    return header, records


def _data_lines(path: str | Path) -> list[tuple[int, str]]:
    lines = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            lines.append((lineno, stripped))
    return lines


def _parse_int(path, lineno, token, what) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: non-integer {what} {token!r}") from None


def read_annotations(
    path: str | Path, n_classes: int | None = None
) -> list[AnnotationEvent]:
    """Read events from delimited text: scene_id,class_id,start,end per line."""
    events = []
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        scene, cls, start, end = (
            _parse_int(path, lineno, parts[0], "scene id"),
            _parse_int(path, lineno, parts[1], "class id"),
            _parse_int(path, lineno, parts[2], "start frame"),
            _parse_int(path, lineno, parts[3], "end frame"),
        )
        if n_classes is not None and not 0 < cls < n_classes:
            raise FormatError(f"{path}:{lineno}: unknown class id {cls}")
        try:
            events.append(AnnotationEvent(scene, cls, start, end))
        except ValidationError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return events


def write_annotations(path: str | Path, events: Iterable[AnnotationEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scene_id,class_id,start_frame,end_frame\n")
        for ev in events:
            fh.write(f"{ev.scene_id},{ev.class_id},{ev.start_frame},{ev.end_frame}\n")


def read_predictions(
    path: str | Path, n_classes: int | None = None
) -> list[Prediction]:
    """Read predictions: scene_id,class_id,start,end,peak_prob per line."""
    preds = []
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        scene = _parse_int(path, lineno, parts[0], "scene id")
        cls = _parse_int(path, lineno, parts[1], "class id")
        start = _parse_int(path, lineno, parts[2], "start frame")
        end = _parse_int(path, lineno, parts[3], "end frame")
        if n_classes is not None and not 0 < cls < n_classes:
            raise FormatError(f"{path}:{lineno}: unknown class id {cls}")
        try:
            peak = float(parts[4])
        except ValueError:
            raise FormatError(
                f"{path}:{lineno}: bad peak probability {parts[4]!r}"
            ) from None
        try:
            preds.append(Prediction(scene, cls, start, end, peak))
        except ValidationError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return preds


def write_predictions(path: str | Path, preds: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scene_id,class_id,start_frame,end_frame,peak_prob\n")
        for p in preds:
            fh.write(
                f"{p.scene_id},{p.class_id},{p.start_frame},{p.end_frame},"
                f"{p.peak_prob!r}\n"
            )


def read_segment_probs(path: str | Path, n_classes: int) -> list[SegmentProbabilities]:
    """Read segment probabilities: scene_id,view_id,start_frame,p_0..p_{N_c-1}."""
    out = []
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 + n_classes:
            raise FormatError(
                f"{path}:{lineno}: expected {3 + n_classes} fields, got {len(parts)}"
            )
        scene = _parse_int(path, lineno, parts[0], "scene id")
        view = _parse_int(path, lineno, parts[1], "view id")
        start = _parse_int(path, lineno, parts[2], "start frame")
        try:
            probs = np.array([float(p) for p in parts[3:]], dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad probability value") from None
        out.append(SegmentProbabilities(scene, view, start, probs))
    return out


def write_segment_probs(
    path: str | Path, segs: Iterable[SegmentProbabilities]
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scene_id,view_id,start_frame,p_0..p_{n-1}\n")
        for s in segs:
            probs = ",".join(repr(float(p)) for p in s.probs)
            fh.write(f"{s.scene_id},{s.view_id},{s.start_frame},{probs}\n")


def scene_matrix_filename(scene_id: int) -> str:
    return f"scene_{scene_id:06d}.csv"


def write_scene_matrix(path: str | Path, matrix: SceneProbabilityMatrix) -> None:
    """One frame per row: p_0..p_{N_c-1}; the row index is the frame index."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# scene {matrix.scene_id}: one frame per row, p_0..p_{{n-1}}\n")
        for row in matrix.matrix:
            fh.write(",".join(repr(float(p)) for p in row) + "\n")


def read_scene_matrix(path: str | Path, scene_id: int) -> SceneProbabilityMatrix:
    rows = []
    width = None
    for lineno, line in _data_lines(path):
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise FormatError(f"{path}:{lineno}: inconsistent row width")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad probability value") from None
    if not rows:
        raise FormatError(f"{path}: empty scene matrix")
    matrix = SceneProbabilityMatrix(scene_id, np.array(rows, dtype=np.float64))
    try:
        return matrix.validate()
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_scene_matrices(
    out_dir: str | Path, matrices: Iterable[SceneProbabilityMatrix]
) -> list[Path]:
    """Write one file per scene into out_dir; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for m in matrices:
        p = out_dir / scene_matrix_filename(m.scene_id)
        write_scene_matrix(p, m)
        paths.append(p)
    return paths


def read_scene_matrices(in_dir: str | Path) -> list[SceneProbabilityMatrix]:
    in_dir = Path(in_dir)
    matrices = []
    for p in sorted(in_dir.glob("scene_*.csv")):
        try:
            scene_id = int(p.stem.split("_", 1)[1])
        except (IndexError, ValueError):
            raise FormatError(f"{p}: cannot parse scene id from filename") from None
        matrices.append(read_scene_matrix(p, scene_id))
    if not matrices:
        raise FormatError(f"{in_dir}: no scene_*.csv matrices found")
    return matrices


def read_config(path: str | Path) -> PipelineConfig:
    """Parse a key=value config file; unknown keys are an error."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    defaults = PipelineConfig()
    overrides = {}
    for lineno, line in _data_lines(path):
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
        kind = type(getattr(defaults, key))
        try:
            if kind is int:
                overrides[key] = int(value)
            elif kind is float:
                overrides[key] = float(value)
            else:
                overrides[key] = value
        except ValueError:
            raise FormatError(
                f"{path}:{lineno}: bad value {value!r} for key {key!r}"
            ) from None
    try:
        return PipelineConfig(**overrides)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_config(path: str | Path, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(PipelineConfig):
            fh.write(f"{f.name}={getattr(config, f.name)}\n")


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text via a temp file + rename so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
