"""Balanced sampling index and the synthetic scene generator."""

from __future__ import annotations

import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dgloc import (
    AnnotationEvent,
    FrameLabelTimeline,
    PipelineConfig,
    SegmentFeatureRecord,
    SyntheticSpec,
    ValidationError,
    build_index,
    frame_labels_from_annotations,
    generate_synthetic,
    random_prototypes,
    sample_batch,
)

from conftest import make_synthetic


def record(scene, view, start, n_f=4):
    return SegmentFeatureRecord(scene, view, start, np.zeros(n_f, np.float32))


def cfg(**kw):
    base = dict(n_classes=3, feature_dim=4, segment_len=4)
    base.update(kw)
    return PipelineConfig(**base)


class TestBuildIndex:
    def test_single_class_segment(self):
        timelines = {0: FrameLabelTimeline(0, np.full(10, 2))}
        index = build_index([record(0, 0, 2)], timelines, cfg())
        assert index.pools == {(2, 0): [0]}
        assert index.record_labels.tolist() == [2]
        assert index.record_counts[0].tolist() == [0, 0, 4]

    def test_boundary_segment_majority(self):
        labels = np.array([0, 0, 0, 1, 1, 0])
        timelines = {0: FrameLabelTimeline(0, labels)}
        index = build_index([record(0, 0, 0)], timelines, cfg())
        assert index.pools == {(0, 0): [0]}  # 3 background vs 1 class-1

    def test_majority_tie_breaks_small_id(self):
        labels = np.array([0, 0, 1, 1])
        timelines = {0: FrameLabelTimeline(0, labels)}
        index = build_index([record(0, 0, 0)], timelines, cfg())
        assert index.pools == {(0, 0): [0]}

    def test_views_get_distinct_pools(self):
        timelines = {0: FrameLabelTimeline(0, np.full(8, 1))}
        records = [record(0, 0, 0), record(0, 1, 0)]
        index = build_index(records, timelines, cfg())
        assert index.pools == {(1, 0): [0], (1, 1): [1]}

    def test_missing_timeline(self):
        with pytest.raises(ValidationError):
            build_index([record(5, 0, 0)], {}, cfg())


class TestSampleBatch:
    def make_index(self, pool_sizes, n_views=2):
        timelines = {}
        records = []
        # one scene per class keeps windows single-class
        for c, size in pool_sizes.items():
            timelines[c] = FrameLabelTimeline(c, np.full(20, c))
            for v in range(n_views):
                for i in range(size):
                    records.append(record(c, v, i))
        return build_index(records, timelines, cfg())

    def test_flat_histogram(self):
        index = self.make_index({0: 3, 1: 4, 2: 5})
        batch = sample_batch(index, 2, np.random.default_rng(0))
        assert len(batch) == 2 * 3 * 2
        for cell in index.cells():
            hits = [i for i in batch if i in set(index.pools[cell])]
            assert len(hits) == 2

    def test_undersized_pool_resamples(self):
        index = self.make_index({0: 1, 1: 1, 2: 1}, n_views=1)
        batch = sample_batch(index, 3, np.random.default_rng(0))
        assert len(batch) == 9
        for cell in index.cells():
            target = index.pools[cell][0]
            assert batch.count(target) == 3

    def test_empty_pools_logged_and_skipped(self, caplog):
        index = self.make_index({0: 2, 1: 2})
        index.pools[(2, 0)] = []
        with caplog.at_level(logging.WARNING, logger="dgloc.dataset"):
            batch = sample_batch(index, 2, np.random.default_rng(0))
        assert len(batch) == 2 * 2 * 2
        assert any("empty" in r.message for r in caplog.records)

    def test_all_empty_pools_error(self):
        index = self.make_index({0: 1})
        for cell in list(index.pools):
            index.pools[cell] = []
        with pytest.raises(ValidationError):
            sample_batch(index, 1, np.random.default_rng(0))

    def test_k_must_be_positive(self):
        index = self.make_index({0: 1})
        with pytest.raises(ValidationError):
            sample_batch(index, 0, np.random.default_rng(0))

    def test_deterministic_given_seed(self):
        index = self.make_index({0: 3, 1: 4, 2: 5})
        a = sample_batch(index, 3, np.random.default_rng(42))
        b = sample_batch(index, 3, np.random.default_rng(42))
        assert a == b


class TestSyntheticSpec:
    def test_rejects_bad_ranges(self):
        proto = np.zeros((3, 4))
        with pytest.raises(ValidationError):
            SyntheticSpec(1, 100, 1, proto, 0.0, (0, 5), seed=0)
        with pytest.raises(ValidationError):
            SyntheticSpec(1, 100, 1, proto, 0.0, (9, 5), seed=0)
        with pytest.raises(ValidationError):
            SyntheticSpec(0, 100, 1, proto, 0.0, (5, 9), seed=0)
        with pytest.raises(ValidationError):
            SyntheticSpec(1, 100, 1, proto, -0.1, (5, 9), seed=0)


class TestGenerateSynthetic:
    def test_every_class_once_per_scene(self, tiny_config):
        _, (records, annotations, timelines) = make_synthetic(tiny_config)
        for scene in timelines:
            classes = sorted(
                ev.class_id for ev in annotations if ev.scene_id == scene
            )
            assert classes == list(range(1, tiny_config.n_classes))

    def test_timelines_match_annotations(self, tiny_config):
        spec, (records, annotations, timelines) = make_synthetic(tiny_config)
        for scene, tl in timelines.items():
            events = [e for e in annotations if e.scene_id == scene]
            rebuilt = frame_labels_from_annotations(events, spec.scene_len)
            assert np.array_equal(rebuilt.labels, tl.labels)

    def test_events_gap_at_least_one_frame(self, tiny_config):
        _, (_, annotations, timelines) = make_synthetic(tiny_config)
        for scene in timelines:
            events = sorted(
                (e for e in annotations if e.scene_id == scene),
                key=lambda e: e.start_frame,
            )
            for a, b in zip(events, events[1:]):
                assert b.start_frame > a.end_frame + 1

    def test_record_geometry(self, tiny_config):
        spec, (records, _, _) = make_synthetic(tiny_config)
        t_c = tiny_config.segment_len
        starts = np.arange(0, spec.scene_len - t_c + 1, tiny_config.stride)
        assert len(records) == spec.n_scenes * spec.n_views * len(starts)
        assert records[0].features.dtype == np.float32
        assert records[0].features.shape == (tiny_config.feature_dim,)

    def test_zero_noise_single_class_equals_prototype(self):
        config = cfg(segment_len=8)
        proto = random_prototypes(3, 4, np.random.default_rng(3))
        spec = SyntheticSpec(1, 200, 1, proto, 0.0, (30, 40), seed=9)
        records, annotations, timelines = generate_synthetic(spec, config)
        labels = timelines[0].labels
        checked = 0
        for rec in records:
            window = labels[rec.start_frame : rec.start_frame + 8]
            if len(set(window.tolist())) == 1:
                expected = proto[window[0]].astype(np.float32)
                assert np.array_equal(rec.features, expected)
                checked += 1
        assert checked > 0

    def test_zero_noise_boundary_is_convex_combination(self):
        config = cfg(segment_len=8)
        proto = random_prototypes(3, 4, np.random.default_rng(3))
        spec = SyntheticSpec(1, 200, 1, proto, 0.0, (30, 40), seed=9)
        records, _, timelines = generate_synthetic(spec, config)
        labels = timelines[0].labels
        checked = 0
        for rec in records:
            window = labels[rec.start_frame : rec.start_frame + 8]
            expected = proto[window].mean(axis=0)
            assert_allclose(rec.features, expected, atol=1e-6)
            checked += 1
        assert checked > 0

    def test_same_seed_bit_identical(self, tiny_config):
        _, (r1, a1, t1) = make_synthetic(tiny_config, seed=11)
        _, (r2, a2, t2) = make_synthetic(tiny_config, seed=11)
        assert a1 == a2
        assert all(np.array_equal(x.labels, y.labels) for x, y in
                   zip(t1.values(), t2.values()))
        assert all(
            np.array_equal(x.features, y.features)
            and (x.scene_id, x.view_id, x.start_frame)
            == (y.scene_id, y.view_id, y.start_frame)
            for x, y in zip(r1, r2)
        )

    def test_scene_too_short(self):
        proto = np.zeros((4, 2))
        spec = SyntheticSpec(1, 50, 1, proto, 0.0, (30, 30), seed=0)
        with pytest.raises(ValidationError):
            generate_synthetic(spec, cfg(n_classes=4, feature_dim=2))

    def test_boundary_ramp_blends_features(self):
        config = cfg(segment_len=4)
        proto = random_prototypes(3, 4, np.random.default_rng(0))
        sharp = SyntheticSpec(1, 300, 1, proto, 0.0, (50, 60), seed=2)
        ramped = SyntheticSpec(1, 300, 1, proto, 0.0, (50, 60), seed=2,
                               boundary_ramp=31)
        r_sharp, ann, timelines = generate_synthetic(sharp, config)
        r_ramp, ann2, _ = generate_synthetic(ramped, config)
        assert ann == ann2  # ramp changes features, not the ground truth
        diffs = [
            np.abs(a.features - b.features).max()
            for a, b in zip(r_sharp, r_ramp)
        ]
        assert max(diffs) > 0.01  # boundary windows differ
        # far from any boundary the features are untouched
        labels = timelines[0].labels
        for a, b in zip(r_sharp, r_ramp):
            window = labels[a.start_frame : a.start_frame + 4 + 31]
            lead = labels[max(0, a.start_frame - 31) : a.start_frame]
            around = set(window.tolist()) | set(lead.tolist())
            if len(around) == 1:
                assert np.array_equal(a.features, b.features)
