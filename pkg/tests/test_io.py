"""File formats, synthetic data, and run reporting."""

import hashlib
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cipherfit.errors import FormatError, ParameterError
from cipherfit.io import (
    EpochMetrics,
    REPORT_SCHEMA,
    RunReport,
    Standardization,
    feature_file_from_bytes,
    feature_file_to_bytes,
    label_file_from_bytes,
    label_file_to_bytes,
    load_features,
    load_labels,
    load_model,
    model_file_from_bytes,
    model_file_to_bytes,
    read_metrics_log,
    save_features,
    save_labels,
    save_model,
    synth_blobs,
    write_metrics_log,
)

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")

# Frozen digests of the committed fixture files; any writer change that
# silently alters the wire format shows up here first.
GOLDEN_SHA256 = {
    "features_f32.btft":
        "c6860a57803ed03a4c39da256a2568cce1fbcaf7db7eec6c4fa5092aa1916cf5",
    "features_f64_stats.btft":
        "ffe388592eb233053ad3f6e791a77a13bb3773f0507f408a41958817b863b9a0",
    "labels.btlb":
        "5325cf82092ae1f43c3bcf3467e79eada1b2275f973a9fa0a6fa08a10f5e5ad8",
    "model.btmd":
        "77bb5a4a73fa653010be13c8c6a3ad2adbf63fed907c47b0171339ea9020cd7a",
}


def _golden_bytes(name: str) -> bytes:
    with open(os.path.join(GOLDEN_DIR, name), "rb") as f:
        return f.read()


def _golden_inputs():
    rng = np.random.default_rng(20240817)
    feats = rng.uniform(-2.0, 2.0, (5, 4))
    stats = Standardization(means=rng.uniform(-1, 1, 4),
                            stds=rng.uniform(0.5, 2.0, 4))
    labels = np.array([0, 2, 1, 2, 0], dtype=np.int64)
    weights = rng.uniform(-1.0, 1.0, (3, 4))
    digest = hashlib.sha256(b"golden-fixture").hexdigest()
    return feats, stats, labels, weights, digest


class TestFeatureFile:
    def test_roundtrip_f64_with_stats(self):
        rng = np.random.default_rng(1)
        feats = rng.normal(size=(7, 5))
        stats = Standardization(rng.normal(size=5), rng.uniform(0.5, 2, 5))
        out, got_stats = feature_file_from_bytes(
            feature_file_to_bytes(feats, stats=stats, dtype="f64"))
        np.testing.assert_array_equal(out, feats)
        np.testing.assert_array_equal(got_stats.means, stats.means)
        np.testing.assert_array_equal(got_stats.stds, stats.stds)

    def test_roundtrip_f32_quantizes_once(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(3, 9))
        out, got_stats = feature_file_from_bytes(
            feature_file_to_bytes(feats, dtype="f32"))
        np.testing.assert_array_equal(out, feats.astype(np.float32))
        assert got_stats is None

    @settings(max_examples=40, deadline=None)
    @given(rows=st.integers(1, 20), cols=st.integers(1, 12),
           seed=st.integers(0, 2**31), use_f32=st.booleans())
    def test_roundtrip_random(self, rows, cols, seed, use_f32):
        feats = np.random.default_rng(seed).normal(size=(rows, cols))
        dtype = "f32" if use_f32 else "f64"
        out, _ = feature_file_from_bytes(
            feature_file_to_bytes(feats, dtype=dtype))
        expect = feats.astype(np.float32) if use_f32 else feats
        np.testing.assert_array_equal(out, expect)

    def test_write_is_deterministic(self):
        feats = np.random.default_rng(3).normal(size=(4, 4))
        assert feature_file_to_bytes(feats) == feature_file_to_bytes(feats)

    def test_truncation_reports_offset(self):
        blob = feature_file_to_bytes(np.ones((4, 3)))
        with pytest.raises(FormatError, match="byte"):
            feature_file_from_bytes(blob[:-5])

    def test_bad_magic(self):
        blob = feature_file_to_bytes(np.ones((2, 2)))
        with pytest.raises(FormatError, match="magic"):
            feature_file_from_bytes(b"XXXX" + blob[4:])

    def test_trailing_garbage_rejected(self):
        blob = feature_file_to_bytes(np.ones((2, 2)))
        with pytest.raises(FormatError):
            feature_file_from_bytes(blob + b"\x00")


class TestLabelFile:
    def test_roundtrip(self):
        labels = np.array([3, 0, 1, 2, 2, 0])
        out, k = label_file_from_bytes(label_file_to_bytes(labels, 4))
        np.testing.assert_array_equal(out, labels)
        assert k == 4

    def test_out_of_range_index_rejected_on_write(self):
        with pytest.raises(FormatError):
            label_file_to_bytes(np.array([0, 5]), 3)

    def test_out_of_range_index_rejected_on_read(self):
        blob = bytearray(label_file_to_bytes(np.array([0, 1, 2]), 3))
        blob[-2:] = (9).to_bytes(2, "little")  # forge the final index
        with pytest.raises(FormatError, match="class"):
            label_file_from_bytes(bytes(blob))

    def test_truncation(self):
        blob = label_file_to_bytes(np.array([0, 1]), 2)
        with pytest.raises(FormatError, match="byte"):
            label_file_from_bytes(blob[:-1])


class TestModelFile:
    def test_roundtrip(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(3, 8))
        stats = Standardization(rng.normal(size=8), rng.uniform(0.5, 2, 8))
        digest = "ab" * 32
        out, got_digest, got_stats = model_file_from_bytes(
            model_file_to_bytes(w, digest, stats))
        np.testing.assert_array_equal(out, w)
        assert got_digest == digest
        np.testing.assert_array_equal(got_stats.means, stats.means)

    def test_without_stats(self):
        w = np.zeros((2, 2))
        out, digest, stats = model_file_from_bytes(
            model_file_to_bytes(w, "00" * 32, None))
        np.testing.assert_array_equal(out, w)
        assert stats is None

    def test_truncation(self):
        blob = model_file_to_bytes(np.ones((2, 3)), "00" * 32, None)
        with pytest.raises(FormatError, match="byte"):
            model_file_from_bytes(blob[: len(blob) // 2])


class TestGoldenFiles:
    """Committed fixtures pin the byte-level wire format."""

    @pytest.mark.parametrize("name", sorted(GOLDEN_SHA256))
    def test_committed_bytes_unchanged(self, name):
        assert hashlib.sha256(_golden_bytes(name)).hexdigest() == \
            GOLDEN_SHA256[name]

    def test_writers_still_produce_golden_bytes(self):
        feats, stats, labels, weights, digest = _golden_inputs()
        assert feature_file_to_bytes(feats, stats=None, dtype="f32") == \
            _golden_bytes("features_f32.btft")
        assert feature_file_to_bytes(feats, stats=stats, dtype="f64") == \
            _golden_bytes("features_f64_stats.btft")
        assert label_file_to_bytes(labels, 3) == _golden_bytes("labels.btlb")
        assert model_file_to_bytes(weights, digest, stats) == \
            _golden_bytes("model.btmd")

    def test_golden_files_parse(self):
        feats, stats, labels, weights, digest = _golden_inputs()
        f32, _ = feature_file_from_bytes(_golden_bytes("features_f32.btft"))
        np.testing.assert_array_equal(f32, feats.astype(np.float32))
        f64, got_stats = feature_file_from_bytes(
            _golden_bytes("features_f64_stats.btft"))
        np.testing.assert_array_equal(f64, feats)
        np.testing.assert_array_equal(got_stats.stds, stats.stds)
        got_labels, k = label_file_from_bytes(_golden_bytes("labels.btlb"))
        np.testing.assert_array_equal(got_labels, labels)
        assert k == 3
        w, got_digest, _ = model_file_from_bytes(_golden_bytes("model.btmd"))
        np.testing.assert_array_equal(w, weights)
        assert got_digest == digest


class TestFileHelpers:
    def test_save_load_paths(self, tmp_path):
        rng = np.random.default_rng(5)
        feats = rng.normal(size=(6, 3))
        labels = np.array([0, 1, 1, 0, 1, 0])
        w = rng.normal(size=(2, 3))
        stats = Standardization(rng.normal(size=3), rng.uniform(0.5, 2, 3))

        save_features(tmp_path / "f.btft", feats, stats=stats, dtype="f64")
        save_labels(tmp_path / "l.btlb", labels, 2)
        save_model(tmp_path / "m.btmd", w, "cd" * 32, stats)

        got_f, got_stats = load_features(tmp_path / "f.btft")
        np.testing.assert_array_equal(got_f, feats)
        np.testing.assert_array_equal(got_stats.means, stats.means)
        got_l, k = load_labels(tmp_path / "l.btlb")
        np.testing.assert_array_equal(got_l, labels)
        assert k == 2
        got_w, digest, _ = load_model(tmp_path / "m.btmd")
        np.testing.assert_array_equal(got_w, w)
        assert digest == "cd" * 32


class TestSynthBlobs:
    def test_deterministic(self):
        a = synth_blobs(3, 16, 60, seed=9)
        b = synth_blobs(3, 16, 60, seed=9)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert feature_file_to_bytes(a[0]) == feature_file_to_bytes(b[0])

    def test_seed_changes_data(self):
        a, _ = synth_blobs(3, 16, 60, seed=9)
        b, _ = synth_blobs(3, 16, 60, seed=10)
        assert not np.array_equal(a, b)

    def test_class_counts_differ_by_at_most_one(self):
        for n in (384, 385, 386):
            _, labels = synth_blobs(3, 16, n, seed=1)
            counts = np.bincount(labels, minlength=3)
            assert counts.max() - counts.min() <= 1
            assert counts.sum() == n

    def test_mean_pairwise_distance_matches_separation(self):
        feats, labels = synth_blobs(4, 12, 4000, seed=2, separation=4.0)
        means = np.stack([feats[labels == c].mean(axis=0) for c in range(4)])
        for i in range(4):
            for j in range(i + 1, 4):
                dist = np.linalg.norm(means[i] - means[j])
                assert dist == pytest.approx(4.0, abs=0.15)

    def test_separable_blobs_train_to_high_accuracy(self):
        from cipherfit.protocol import TrainingConfig
        from cipherfit.protocol.data import prepare_splits
        from cipherfit.protocol.oracle import plaintext_oracle_train

        cfg = TrainingConfig()
        feats, labels = synth_blobs(3, 16, 384, seed=1, separation=4.0)
        train, val, test = prepare_splits(feats, labels, cfg.split_ratios,
                                          cfg.seed)
        result = plaintext_oracle_train(train, val, cfg, softmax="exact")
        logits = test.features @ result.weights.T
        acc = float(np.mean(np.argmax(logits, 1) == test.labels))
        assert acc >= 0.98

    def test_zero_separation_trains_to_chance(self):
        from cipherfit.protocol import TrainingConfig
        from cipherfit.protocol.data import prepare_splits
        from cipherfit.protocol.oracle import plaintext_oracle_train

        cfg = TrainingConfig()
        feats, labels = synth_blobs(3, 16, 3000, seed=1, separation=0.0)
        train, val, test = prepare_splits(feats, labels, cfg.split_ratios,
                                          cfg.seed)
        result = plaintext_oracle_train(train, val, cfg, softmax="exact")
        logits = test.features @ result.weights.T
        acc = float(np.mean(np.argmax(logits, 1) == test.labels))
        assert abs(acc - 1.0 / 3.0) <= 0.05

    def test_validation(self):
        with pytest.raises(ParameterError):
            synth_blobs(1, 16, 30, seed=0)
        with pytest.raises(ParameterError):
            synth_blobs(3, 1, 30, seed=0)
        with pytest.raises(ParameterError):
            synth_blobs(3, 2, 30, seed=0)  # dim < classes
        with pytest.raises(ParameterError):
            synth_blobs(3, 16, 2, seed=0)  # count < classes


class TestReport:
    def _metrics(self):
        return [
            EpochMetrics(epoch=0, t=3, val_loss=1.0, val_accuracy=0.5,
                         refresh_count=2, wall_ms=120.5),
            EpochMetrics(epoch=1, t=6, val_loss=0.7, val_accuracy=0.9,
                         refresh_count=4, wall_ms=118.0),
        ]

    def test_report_roundtrip(self):
        report = RunReport(
            config={"epochs": 2, "seed": 1},
            metrics=self._metrics(),
            final_test_accuracy=0.95,
            train_wall_s=12.5,
            refresh_total=4,
            comparison={"plain_final_test_accuracy": 0.96},
        )
        again = RunReport.from_json(report.to_json())
        assert again.schema == REPORT_SCHEMA
        assert again.config == report.config
        assert again.final_test_accuracy == 0.95
        assert [m.as_record() for m in again.metrics] == \
            [m.as_record() for m in report.metrics]
        assert again.comparison == report.comparison

    def test_report_is_machine_parseable_json(self):
        report = RunReport(config={}, metrics=[], final_test_accuracy=1.0,
                           train_wall_s=0.0, refresh_total=0)
        doc = json.loads(report.to_json())
        assert doc["schema"] == REPORT_SCHEMA

    def test_unknown_schema_rejected(self):
        report = RunReport(config={}, metrics=[], final_test_accuracy=1.0,
                           train_wall_s=0.0, refresh_total=0)
        doc = json.loads(report.to_json())
        doc["schema"] = "???"
        with pytest.raises(FormatError):
            RunReport.from_json(json.dumps(doc))

    def test_metrics_log_roundtrip(self, tmp_path):
        path = tmp_path / "metrics.ndjson"
        write_metrics_log(path, self._metrics())
        again = read_metrics_log(path)
        assert [m.as_record() for m in again] == \
            [m.as_record() for m in self._metrics()]
