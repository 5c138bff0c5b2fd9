"""End-to-end exercise of every CLI subcommand through `main(argv)`.

One shared synthetic dataset and one shared encrypted training run keep
the suite fast; stdout-sensitive checks run their own quick commands.
"""

import json
import os
import stat
import subprocess
import sys
import threading

import numpy as np
import pytest

from cipherfit import ckks
from cipherfit.cli import DATASET_DEFAULTS, main
from cipherfit.io import (
    RunReport,
    load_features,
    load_labels,
    load_model,
    read_metrics_log,
)

SMALL_FLAGS = ["--preset", "small", "--epochs", "2", "--batch", "128"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    data = base / "data"
    rc = main([
        "synth-data", "--classes", "3", "--dim", "16", "--n", "384",
        "--seed", "1", "--out", str(data),
    ])
    assert rc == 0
    return {
        "base": base,
        "features": str(data / "features.btft"),
        "labels": str(data / "labels.btlb"),
    }


@pytest.fixture(scope="module")
def local_run(workdir):
    out = workdir["base"] / "run-local"
    session = workdir["base"] / "session-local"
    rc = main([
        "train-local", *SMALL_FLAGS,
        "--features", workdir["features"], "--labels", workdir["labels"],
        "--session", str(session), "--out", str(out),
    ])
    assert rc == 0
    report = RunReport.from_json((out / "report.json").read_text())
    return {"out": out, "session": session, "report": report}


@pytest.fixture(scope="module")
def keydir(workdir):
    out = workdir["base"] / "keys"
    rc = main([
        "keygen", "--preset", "small", "--seed", "1",
        "--dim", "16", "--classes", "3", "--out", str(out),
    ])
    assert rc == 0
    return out


class TestSynthData:
    def test_rerun_is_byte_identical(self, workdir, tmp_path):
        again = tmp_path / "again"
        rc = main([
            "synth-data", "--classes", "3", "--dim", "16", "--n", "384",
            "--seed", "1", "--out", str(again),
        ])
        assert rc == 0
        original = open(workdir["features"], "rb").read()
        assert (again / "features.btft").read_bytes() == original
        original = open(workdir["labels"], "rb").read()
        assert (again / "labels.btlb").read_bytes() == original

    def test_files_parse_with_declared_shape(self, workdir):
        feats, stats = load_features(workdir["features"])
        labels, classes = load_labels(workdir["labels"])
        assert feats.shape == (384, 16) and feats.dtype == np.float64
        assert stats is None
        assert len(labels) == 384 and classes == 3

    def test_bad_class_count_is_usage_error(self, tmp_path, capsys):
        rc = main([
            "synth-data", "--classes", "1", "--dim", "16", "--n", "10",
            "--seed", "1", "--out", str(tmp_path),
        ])
        assert rc == 2
        assert "classes" in capsys.readouterr().err


class TestDefaultsResolution:
    def _echo_line(self, capsys, extra):
        """Run the fast plaintext trainer and grab the config echo."""
        rc_unused = extra  # flags list reused to build the command
        return capsys.readouterr().out.splitlines()[0]

    def test_omitted_flags_use_first_row(self, workdir, tmp_path, capsys):
        rc = main([
            "train-plain", "--features", workdir["features"],
            "--labels", workdir["labels"], "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        echo = capsys.readouterr().out.splitlines()[0]
        assert "epochs=5" in echo and "lr=0.1" in echo and "batch=1024" in echo
        assert DATASET_DEFAULTS["mnist"] == (5, 0.1, 1024)

    def test_named_row_fills_omitted_flags(self, workdir, tmp_path, capsys):
        rc = main([
            "train-plain", "--defaults", "dermamnist",
            "--features", workdir["features"],
            "--labels", workdir["labels"], "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        echo = capsys.readouterr().out.splitlines()[0]
        assert "epochs=12" in echo and "lr=0.01" in echo and "batch=512" in echo

    def test_explicit_flag_beats_row(self, workdir, tmp_path, capsys):
        rc = main([
            "train-plain", "--defaults", "dermamnist", "--epochs", "2",
            "--features", workdir["features"],
            "--labels", workdir["labels"], "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        echo = capsys.readouterr().out.splitlines()[0]
        assert "epochs=2" in echo and "lr=0.01" in echo

    def test_all_rows_well_formed(self):
        for epochs, lr, batch in DATASET_DEFAULTS.values():
            assert epochs >= 1 and lr > 0 and batch >= 1


class TestTrainLocal:
    def test_writes_all_artifacts(self, local_run):
        for name in ("model.btmd", "report.json", "metrics.ndjson",
                     "test-features.btft", "test-labels.btlb"):
            assert (local_run["out"] / name).exists(), name

    def test_report_contents(self, local_run):
        report = local_run["report"]
        assert report.final_test_accuracy >= 0.98
        assert len(report.metrics) == 2
        assert report.refresh_total == report.metrics[-1].refresh_count > 0
        assert report.config["scheme_preset"] == "small"
        assert report.config["split_ratios"] == [0.6, 0.2, 0.2]
        comp = report.comparison
        assert comp["oracle_softmax"] == "exact"
        assert abs(comp["accuracy_gap"]) <= 0.02

    def test_metrics_log_matches_report(self, local_run):
        entries = read_metrics_log(local_run["out"] / "metrics.ndjson")
        assert entries == list(local_run["report"].metrics)

    def test_model_file_is_complete(self, local_run):
        weights, digest, stats = load_model(local_run["out"] / "model.btmd")
        assert weights.shape == (3, 16)
        assert digest == ckks.preset("small").digest().hex()
        assert stats is not None and stats.means.shape == (16,)

    def test_test_split_files_are_raw_rows(self, workdir, local_run):
        feats, stats = load_features(local_run["out"] / "test-features.btft")
        labels, classes = load_labels(local_run["out"] / "test-labels.btlb")
        assert stats is None and classes == 3
        assert feats.shape == (78, 16) and len(labels) == 78
        all_rows = load_features(workdir["features"])[0]
        # every test row is one of the raw input rows, untransformed
        matches = (feats[:, None, :] == all_rows[None, :, :]).all(axis=2)
        assert matches.any(axis=1).all()

    def test_rerun_reproduces_model_and_metrics(self, workdir, local_run,
                                                tmp_path):
        out = tmp_path / "rerun"
        rc = main([
            "train-local", *SMALL_FLAGS,
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--out", str(out),
        ])
        assert rc == 0
        assert (out / "model.btmd").read_bytes() == \
            (local_run["out"] / "model.btmd").read_bytes()
        again = RunReport.from_json((out / "report.json").read_text())
        report = local_run["report"]
        assert again.final_test_accuracy == report.final_test_accuracy
        assert again.refresh_total == report.refresh_total
        for a, b in zip(again.metrics, report.metrics):
            assert (a.val_loss, a.val_accuracy) == (b.val_loss, b.val_accuracy)

    def test_session_transcript_recorded(self, local_run):
        frames = sorted(os.listdir(local_run["session"]))
        assert len(frames) > 10
        assert frames[0] == "msg-000000.bin"


class TestKeygenDecryptInfer:
    def test_keygen_writes_key_files(self, keydir):
        for name in ("secret.key", "public.key", "eval.key"):
            assert (keydir / name).stat().st_size > 0
        mode = stat.S_IMODE((keydir / "secret.key").stat().st_mode)
        assert mode == 0o600

    def test_keygen_is_deterministic(self, keydir, tmp_path):
        rc = main([
            "keygen", "--preset", "small", "--seed", "1",
            "--dim", "16", "--classes", "3", "--out", str(tmp_path),
        ])
        assert rc == 0
        assert (tmp_path / "secret.key").read_bytes() == \
            (keydir / "secret.key").read_bytes()

    def test_decrypt_model_matches_training_output(self, workdir, local_run,
                                                   keydir, tmp_path):
        out = tmp_path / "model.btmd"
        rc = main([
            "decrypt-model", "--session", str(local_run["session"]),
            "--key", str(keydir / "secret.key"),
            "--features", workdir["features"], "--out", str(out),
        ])
        assert rc == 0
        assert out.read_bytes() == \
            (local_run["out"] / "model.btmd").read_bytes()

    def test_decrypted_model_infer_reproduces_report_accuracy(
            self, workdir, local_run, keydir, tmp_path, capsys):
        model = tmp_path / "model.btmd"
        assert main([
            "decrypt-model", "--session", str(local_run["session"]),
            "--key", str(keydir / "secret.key"),
            "--features", workdir["features"], "--out", str(model),
        ]) == 0
        pred = tmp_path / "pred.btlb"
        rc = main([
            "infer", "--model", str(model),
            "--features", str(local_run["out"] / "test-features.btft"),
            "--labels", str(local_run["out"] / "test-labels.btlb"),
            "--out", str(pred),
        ])
        assert rc == 0
        predictions, _ = load_labels(pred)
        truth, _ = load_labels(local_run["out"] / "test-labels.btlb")
        accuracy = float(np.mean(predictions == truth))
        assert accuracy == local_run["report"].final_test_accuracy

    def test_infer_without_labels_writes_predictions(self, local_run,
                                                     tmp_path, capsys):
        pred = tmp_path / "pred.btlb"
        rc = main([
            "infer", "--model", str(local_run["out"] / "model.btmd"),
            "--features", str(local_run["out"] / "test-features.btft"),
            "--out", str(pred),
        ])
        assert rc == 0
        assert "accuracy" not in capsys.readouterr().out
        predictions, classes = load_labels(pred)
        assert classes == 3 and len(predictions) == 78


class TestTwoProcessSession:
    def test_encrypt_and_train_cloud_roles(self, workdir, local_run, keydir,
                                           tmp_path):
        session = tmp_path / "session"
        out = tmp_path / "run"
        box = {}

        def cloud():
            box["rc"] = main(["train-cloud", "--session", str(session)])

        thread = threading.Thread(target=cloud, daemon=True)
        thread.start()
        rc = main([
            "encrypt", *SMALL_FLAGS,
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--session", str(session), "--keys", str(keydir),
            "--out", str(out),
        ])
        thread.join(timeout=300)
        assert rc == 0 and box.get("rc") == 0
        # separate roles, directory transport, explicit key files:
        # exact same model as the single-process run
        assert (out / "model.btmd").read_bytes() == \
            (local_run["out"] / "model.btmd").read_bytes()


class TestTrainPlain:
    def test_writes_artifacts_without_refreshes(self, workdir, tmp_path):
        out = tmp_path / "plain"
        rc = main([
            "train-plain", "--epochs", "3", "--batch", "128",
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--out", str(out),
        ])
        assert rc == 0
        report = RunReport.from_json((out / "report.json").read_text())
        assert report.refresh_total == 0
        assert report.comparison is None
        assert report.final_test_accuracy >= 0.98
        assert len(report.metrics) == 3
        weights, _, stats = load_model(out / "model.btmd")
        assert weights.shape == (3, 16) and stats is not None

    def test_approx_softmax_variant(self, workdir, tmp_path):
        out = tmp_path / "plain-approx"
        rc = main([
            "train-plain", "--softmax", "approx", "--epochs", "2",
            "--batch", "128", "--features", workdir["features"],
            "--labels", workdir["labels"], "--out", str(out),
        ])
        assert rc == 0
        report = RunReport.from_json((out / "report.json").read_text())
        assert report.final_test_accuracy >= 0.98


class TestValidateAndReport:
    def test_validate_accepts_every_format(self, workdir, local_run, capsys):
        rc = main([
            "validate", workdir["features"], workdir["labels"],
            str(local_run["out"] / "model.btmd"),
            str(local_run["out"] / "report.json"),
        ])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 4 and all(l.startswith("ok:") for l in lines)

    def test_report_prints_summary(self, local_run, capsys):
        rc = main([
            "report", "--run", str(local_run["out"] / "report.json"),
            "--metrics", str(local_run["out"] / "metrics.ndjson"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "schema: cipherfit-report-v1" in out
        assert "final test accuracy" in out
        assert "metrics log: 2 entries" in out


class TestExitCodes:
    def test_missing_file_is_format_error(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.btft")]) == 3

    def test_unknown_magic_is_format_error(self, tmp_path, capsys):
        bad = tmp_path / "junk.bin"
        bad.write_bytes(b"XXXX not a known container")
        assert main(["validate", str(bad)]) == 3
        assert "unknown leading magic" in capsys.readouterr().err

    def test_wrong_model_magic_is_format_error(self, workdir, tmp_path):
        rc = main([
            "infer", "--model", workdir["labels"],
            "--features", workdir["features"], "--out", str(tmp_path / "p"),
        ])
        assert rc == 3

    def test_feature_width_mismatch_is_usage_error(self, local_run, tmp_path,
                                                   capsys):
        narrow = tmp_path / "narrow"
        assert main([
            "synth-data", "--classes", "3", "--dim", "8", "--n", "24",
            "--seed", "2", "--out", str(narrow),
        ]) == 0
        rc = main([
            "infer", "--model", str(local_run["out"] / "model.btmd"),
            "--features", str(narrow / "features.btft"),
            "--out", str(tmp_path / "p"),
        ])
        assert rc == 2
        assert "width" in capsys.readouterr().err

    def test_row_count_mismatch_is_usage_error(self, workdir, tmp_path):
        short = tmp_path / "short"
        assert main([
            "synth-data", "--classes", "3", "--dim", "16", "--n", "24",
            "--seed", "2", "--out", str(short),
        ]) == 0
        rc = main([
            "train-plain", "--features", workdir["features"],
            "--labels", str(short / "labels.btlb"),
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 2

    def test_wrong_preset_keys_is_crypto_error(self, workdir, keydir,
                                               tmp_path, capsys):
        rc = main([
            "encrypt", "--preset", "desk",
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--session", str(tmp_path / "s"), "--keys", str(keydir),
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 4
        assert "digest mismatch" in capsys.readouterr().err

    def test_depth_exhaustion_maps_to_exit_five(self, workdir, tmp_path,
                                                capsys):
        rc = main([
            "train-local", "--preset", "tiny", "--epochs", "1",
            "--batch", "384", "--refresh-interval", "1000",
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 5
        assert "level" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["no-such-command"]) == 2
        capsys.readouterr()

    def test_zero_epochs_is_usage_error(self, workdir, tmp_path, capsys):
        rc = main([
            "train-plain", "--epochs", "0",
            "--features", workdir["features"], "--labels", workdir["labels"],
            "--out", str(tmp_path / "o"),
        ])
        assert rc == 2
        assert "epochs" in capsys.readouterr().err

    def test_bad_thread_cap_is_usage_error(self, workdir, tmp_path,
                                           monkeypatch, capsys):
        monkeypatch.setenv("BT_THREADS", "many")
        rc = main([
            "validate", workdir["features"],
        ])
        assert rc == 2
        assert "BT_THREADS" in capsys.readouterr().err

    def test_thread_cap_accepts_integer(self, workdir, monkeypatch):
        monkeypatch.setenv("BT_THREADS", "1")
        assert main(["validate", workdir["features"]]) == 0


class TestModuleEntry:
    def test_python_dash_m_invocation(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "cipherfit", "synth-data",
             "--classes", "2", "--dim", "4", "--n", "10",
             "--seed", "3", "--out", str(tmp_path)],
            capture_output=True, text=True, timeout=120,
        )
        assert out.returncode == 0, out.stderr
        assert (tmp_path / "features.btft").exists()

    def test_usage_error_exit_code(self):
        out = subprocess.run(
            [sys.executable, "-m", "cipherfit", "--bogus"],
            capture_output=True, text=True, timeout=120,
        )
        assert out.returncode == 2
