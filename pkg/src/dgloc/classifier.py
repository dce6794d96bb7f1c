"""Two-layer segment classification head trained with smoothed cross-entropy.

The head is sigmoid(W1 x + b1) followed by softmax(W2 h + b2), trained with
Adam plus decoupled weight decay.  All math is float64 numpy; gradients are
analytic (the softmax/cross-entropy identity gives p - q at the output
pre-activation) and checked against finite differences in the test suite.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import TrainingIndex, build_index, sample_batch
from .domain import (
    FormatError,
    FrameLabelTimeline,
    PipelineConfig,
    SegmentFeatureRecord,
    SegmentProbabilities,
    TrainingError,
    ValidationError,
)
from .parallel import parallel_map
from .smoothing import classic_smooth, density_guided_smooth

log = logging.getLogger(__name__)

MODEL_MAGIC = b"DGM1"
MODEL_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class MlpParams:
    w1: np.ndarray  # (hidden, N_f)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (N_c, hidden)
    b2: np.ndarray  # (N_c,)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.b1, self.w2, self.b2

    @property
    def dims(self) -> tuple[int, int, int]:
        """(N_f, hidden, N_c)"""
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]


@dataclass(frozen=True)
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.b1, self.w2, self.b2


@dataclass
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(
            m=tuple(np.zeros_like(a) for a in params.arrays()),
            v=tuple(np.zeros_like(a) for a in params.arrays()),
        )


@dataclass(frozen=True)
class EpochStats:
    mean_loss: float
    accuracy: float
    wall_time_s: float


@dataclass(frozen=True)
class TrainReport:
    epochs: list[EpochStats]


def init_params(
    n_f: int, hidden: int, n_c: int, rng: np.random.Generator
) -> MlpParams:
    """Symmetric uniform init in +/- sqrt(6 / (fan_in + fan_out)); zero biases."""
    lim1 = np.sqrt(6.0 / (n_f + hidden))
    lim2 = np.sqrt(6.0 / (hidden + n_c))
    return MlpParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden, n_f)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(n_c, hidden)),
        b2=np.zeros(n_c),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: MlpParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector or a (batch, N_f) matrix."""
    x = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite feature values")
    if x.shape[-1] != params.w1.shape[1]:
        raise ValidationError(
            f"feature dim {x.shape[-1]} != model N_f {params.w1.shape[1]}"
        )
    h = _sigmoid(x @ params.w1.T + params.b1)
    return _softmax(h @ params.w2.T + params.b2)


def loss(probs: np.ndarray, target: np.ndarray) -> float:
    """Cross-entropy -sum(q * log p) with log clamped at p >= 1e-12."""
    p = np.clip(np.asarray(probs, dtype=np.float64), LOG_CLAMP, None)
    q = np.asarray(target, dtype=np.float64)
    return float(-(q * np.log(p)).sum(axis=-1).mean())


def backward(
    params: MlpParams, features: np.ndarray, targets: np.ndarray
) -> tuple[Gradients, float]:
    """Analytic gradients of the mean batch loss; returns (grads, loss).

    The output-layer pre-activation gradient is (p - q) / batch_size per
    sample, the standard softmax/cross-entropy identity.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    q = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValidationError("empty batch")
    n = x.shape[0]
    z1 = x @ params.w1.T + params.b1
    h = _sigmoid(z1)
    p = _softmax(h @ params.w2.T + params.b2)
    batch_loss = loss(p, q)
    g2 = (p - q) / n  # (n, N_c)
    gw2 = g2.T @ h
    gb2 = g2.sum(axis=0)
    gh = g2 @ params.w2
    g1 = gh * h * (1.0 - h)
    gw1 = g1.T @ x
    gb1 = g1.sum(axis=0)
    grads = Gradients(gw1, gb1, gw2, gb2)
    for a in grads.arrays():
        if not np.all(np.isfinite(a)):
            raise TrainingError(
                f"non-finite gradient (batch loss {batch_loss}); "
                "check inputs or lower the learning rate"
            )
    return grads, batch_loss


def adam_step(
    params: MlpParams,
    grads: Gradients,
    state: AdamState,
    lr: float,
    weight_decay: float,
) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam update with decoupled weight decay.

    The decay term -lr * wd * param is applied outside the moment
    accumulators, so wd does not influence the adaptive step size.
    """
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        step = lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_p.append(p - step - lr * weight_decay * p)
        new_m.append(m)
        new_v.append(v)
    return (
        MlpParams(*new_p),
        AdamState(m=tuple(new_m), v=tuple(new_v), step=t),
    )


def batch_targets(
    index: TrainingIndex, batch: Sequence[int], config: PipelineConfig
) -> np.ndarray:
    """Training targets for a batch of record indices.

    ``density`` mode applies the count-softmax with temperature beta;
    ``classic`` smooths the majority label with epsilon (epsilon 0 gives
    plain hard labels).
    """
    counts = index.record_counts[np.asarray(batch)]
    if config.target_mode == "density":
        return np.stack([density_guided_smooth(c, config.beta) for c in counts])
    return np.stack(
        [
            classic_smooth(int(lbl), config.epsilon, config.n_classes)
            for lbl in index.record_labels[np.asarray(batch)]
        ]
    )


def train(
    records: Sequence[SegmentFeatureRecord],
    timelines: dict[int, FrameLabelTimeline],
    config: PipelineConfig,
    rng: np.random.Generator | None = None,
) -> tuple[MlpParams, TrainReport]:
    """Train the head on balanced batches; deterministic given the rng seed.

    One epoch is ``config.batches_per_epoch`` balanced batches (balanced
    sampling has no natural notion of a data pass).  The reported accuracy
    is the majority-label accuracy over the epoch's sampled batches.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    index = build_index(records, timelines, config)
    feature_matrix = np.stack([r.features for r in records]).astype(np.float64)
    params = init_params(
        config.feature_dim, config.hidden_dim, config.n_classes, rng
    )
    state = AdamState.zeros_like(params)
    epochs: list[EpochStats] = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        losses = []
        hits = 0
        seen = 0
        for _ in range(config.batches_per_epoch):
            batch = sample_batch(index, config.samples_per_class_per_view, rng)
            x = feature_matrix[batch]
            q = batch_targets(index, batch, config)
            grads, batch_loss = backward(params, x, q)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"training diverged at epoch {epoch}")
            params, state = adam_step(
                params, grads, state, config.learning_rate, config.weight_decay
            )
            losses.append(batch_loss)
            preds = forward(params, x).argmax(axis=1)
            hits += int((preds == index.record_labels[batch]).sum())
            seen += len(batch)
        stats = EpochStats(
            mean_loss=float(np.mean(losses)) if losses else 0.0,
            accuracy=hits / seen if seen else 0.0,
            wall_time_s=time.perf_counter() - t0,
        )
        epochs.append(stats)
        log.info(
            "epoch %d: loss %.6f, accuracy %.4f (%.2fs)",
            epoch,
            stats.mean_loss,
            stats.accuracy,
            stats.wall_time_s,
        )
    return params, TrainReport(epochs=epochs)


def infer(
    params: MlpParams,
    records: Sequence[SegmentFeatureRecord],
    threads: int = 1,
    chunk_size: int = 4096,
) -> list[SegmentProbabilities]:
    """Run the head over every record, preserving input order.

    Work is split into fixed chunks, so results do not depend on the
    thread count.
    """
    if not records:
        return []
    chunks = [
        records[i : i + chunk_size] for i in range(0, len(records), chunk_size)
    ]

    def run(chunk: Sequence[SegmentFeatureRecord]) -> np.ndarray:
        x = np.stack([r.features for r in chunk]).astype(np.float64)
        return forward(params, x)

    results = parallel_map(run, chunks, threads)
    out = []
    for chunk, probs in zip(chunks, results):
        for rec, p in zip(chunk, probs):
            out.append(
                SegmentProbabilities(
                    rec.scene_id, rec.view_id, rec.start_frame, p
                )
            )
    return out


def save_model(path: str | Path, params: MlpParams) -> None:
    """Checkpoint layout: magic, u32 version, u32 dims (N_f, hidden, N_c),
    then row-major float64 blocks W1, b1, W2, b2 (little-endian)."""
    n_f, hidden, n_c = params.dims
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            np.array([MODEL_VERSION, n_f, hidden, n_c], dtype="<u4").tobytes()
        )
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: str | Path) -> MlpParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic, not a model checkpoint")
    if len(data) < 20:
        raise FormatError(f"{path}: truncated header")
    version, n_f, hidden, n_c = (
        int(v) for v in np.frombuffer(data, dtype="<u4", count=4, offset=4)
    )
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    sizes = [hidden * n_f, hidden, n_c * hidden, n_c]
    expected = 20 + 8 * sum(sizes)
    if len(data) != expected:
        raise FormatError(
            f"{path}: {len(data)} bytes, expected {expected} for dims "
            f"({n_f}, {hidden}, {n_c})"
        )
    offset = 20
    blocks = []
    for size in sizes:
        blocks.append(
            np.frombuffer(data, dtype="<f8", count=size, offset=offset).copy()
        )
        offset += 8 * size
    return MlpParams(
        w1=blocks[0].reshape(hidden, n_f),
        b1=blocks[1],
        w2=blocks[2].reshape(n_c, hidden),
        b2=blocks[3],
    )
