"""Shared fixtures: small configs, synthetic bundles, and reference oracles."""

from __future__ import annotations

import numpy as np
import pytest

from dgloc import (
    PipelineConfig,
    SyntheticSpec,
    generate_synthetic,
    random_prototypes,
    train,
)


@pytest.fixture(scope="session")
def tiny_config() -> PipelineConfig:
    """Small geometry that trains in well under a second."""
    return PipelineConfig(
        n_classes=4,
        feature_dim=8,
        segment_len=16,
        min_peak_width=20,
        median_window=31,
        epochs=40,
        batches_per_epoch=10,
        samples_per_class_per_view=4,
        learning_rate=1e-2,
        seed=0,
    )


def make_synthetic(
    config: PipelineConfig,
    n_scenes: int = 2,
    scene_len: int = 500,
    n_views: int = 2,
    noise_sigma: float = 0.05,
    event_len_range: tuple[int, int] = (60, 90),
    seed: int = 5,
    boundary_ramp: int = 0,
):
    proto = random_prototypes(
        config.n_classes, config.feature_dim, np.random.default_rng(seed)
    )
    spec = SyntheticSpec(
        n_scenes=n_scenes,
        scene_len=scene_len,
        n_views=n_views,
        prototypes=proto,
        noise_sigma=noise_sigma,
        event_len_range=event_len_range,
        seed=seed,
        boundary_ramp=boundary_ramp,
    )
    return spec, generate_synthetic(spec, config)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_config):
    """(spec, records, annotations, timelines) for two small scenes."""
    spec, (records, annotations, timelines) = make_synthetic(tiny_config)
    return spec, records, annotations, timelines


@pytest.fixture(scope="session")
def tiny_model(tiny_config, tiny_bundle):
    _, records, _, timelines = tiny_bundle
    params, report = train(
        records, timelines, tiny_config, np.random.default_rng(123)
    )
    return params, report


@pytest.fixture(scope="session")
def softmax_oracle():
    """Arbitrary-precision softmax of counts/beta, rounded to float64."""
    mpmath = pytest.importorskip("mpmath")

    def oracle(counts, beta) -> np.ndarray:
        with mpmath.workdps(30):
            exps = [mpmath.exp(mpmath.mpf(int(c)) / mpmath.mpf(beta)) for c in counts]
            total = mpmath.fsum(exps)
            return np.array([float(e / total) for e in exps])

    return oracle


@pytest.fixture(scope="session")
def median_oracle():
    """Naive sort-per-window median with edge replication."""

    def oracle(signal, window: int) -> np.ndarray:
        x = np.asarray(signal, dtype=np.float64)
        pad = window // 2
        padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
        views = np.lib.stride_tricks.sliding_window_view(padded, window)
        return np.sort(views, axis=1)[:, pad]

    return oracle
