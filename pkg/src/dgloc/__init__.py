"""Density-guided temporal action localization on segment features.

The library covers the full downstream pipeline for fixed-stride video
segments: label smoothing targets, a trainable two-layer segment
classifier, multi-camera late fusion, peak-based event localization with
overlap suppression, tolerance-based F1 evaluation, and a deterministic
synthetic data generator.  The ``dgloc`` CLI chains the stages end to end.
"""

from .classifier import (
    AdamState,
    EpochStats,
    Gradients,
    MlpParams,
    TrainReport,
    adam_step,
    backward,
    batch_targets,
    forward,
    infer,
    init_params,
    load_model,
    loss,
    save_model,
    train,
)
from .dataset import (
    SyntheticSpec,
    TrainingIndex,
    build_index,
    generate_synthetic,
    random_prototypes,
    sample_batch,
)
from .domain import (
    BACKGROUND_CLASS,
    AnnotationEvent,
    FormatError,
    FrameLabelTimeline,
    PipelineConfig,
    Prediction,
    SceneProbabilityMatrix,
    SegmentFeatureRecord,
    SegmentProbabilities,
    TrainingError,
    ValidationError,
    events_from_timeline,
    frame_labels_from_annotations,
)
from .evaluation import (
    MatchResult,
    Metrics,
    evaluate,
    match,
    metrics,
    per_class_results,
)
from .fusion import fuse_scene, fuse_scenes
from .localization import (
    PeakDetection,
    detect_peak,
    eliminate_overlaps,
    filtered_signals,
    localize_scene,
    localize_scenes,
    median_filter,
    temporal_iou,
)
from .parallel import parallel_map
from .smoothing import (
    classic_smooth,
    count_labels,
    density_guided_smooth,
    majority_label,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AnnotationEvent",
    "BACKGROUND_CLASS",
    "EpochStats",
    "FormatError",
    "FrameLabelTimeline",
    "Gradients",
    "MatchResult",
    "Metrics",
    "MlpParams",
    "PeakDetection",
    "PipelineConfig",
    "Prediction",
    "SceneProbabilityMatrix",
    "SegmentFeatureRecord",
    "SegmentProbabilities",
    "SyntheticSpec",
    "TrainReport",
    "TrainingError",
    "TrainingIndex",
    "ValidationError",
    "adam_step",
    "backward",
    "batch_targets",
    "build_index",
    "classic_smooth",
    "count_labels",
    "density_guided_smooth",
    "detect_peak",
    "eliminate_overlaps",
    "evaluate",
    "events_from_timeline",
    "filtered_signals",
    "forward",
    "frame_labels_from_annotations",
    "fuse_scene",
    "fuse_scenes",
    "generate_synthetic",
    "infer",
    "init_params",
    "load_model",
    "localize_scene",
    "localize_scenes",
    "loss",
    "majority_label",
    "match",
    "median_filter",
    "metrics",
    "parallel_map",
    "per_class_results",
    "random_prototypes",
    "sample_batch",
    "save_model",
    "temporal_iou",
    "train",
]
