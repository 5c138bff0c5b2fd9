"""Command-line surface: keys, synthetic data, both training roles, inference.

Every subcommand performs one protocol role or one utility:

  keygen         generate the client key material for a parameter preset
  synth-data     write a deterministic Gaussian-blob feature/label pair
  encrypt        run the CLIENT role against a session directory (blocks
                 until a `train-cloud` peer completes the session)
  train-cloud    run the CLOUD role against a session directory
  train-local    run both roles in one process (in-memory transport)
  train-plain    plaintext comparator: identical trajectory in the clear
  validate       sanity-check feature/label/model/report files
  decrypt-model  recover the trained model from a recorded session
  infer          score a feature file with a trained model
  report         pretty-print a training report (and optional metrics log)

Exit codes: 0 success, 2 usage/parameter errors, 3 file-format errors,
4 cryptographic errors (digest mismatch, missing keys, protocol faults),
5 ciphertext depth exhaustion.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import List, Optional, Tuple

import numpy as np

from . import ckks
from .errors import (
    CapacityError,
    CipherfitError,
    DepthExhaustedError,
    DigestMismatchError,
    DimensionError,
    FormatError,
    KeyMissingError,
    LayoutError,
    ParameterError,
    ProtocolError,
)
from .io import (
    RunReport,
    load_features,
    load_labels,
    load_model,
    read_metrics_log,
    save_features,
    save_labels,
    save_model,
    synth_blobs,
    write_metrics_log,
)
from .linalg import TileLayout, decrypt_matrix, enc_matrix_from_bytes
from .protocol import (
    ORIGIN_CLIENT,
    ORIGIN_CLOUD,
    Client,
    Cloud,
    DirectoryChannel,
    TrainingConfig,
    client_prepare,
    drive_session,
    load_transcript,
    plaintext_oracle_train,
    rotation_steps_for,
    run_session,
    split_indices,
    standardize_fit,
)
from .protocol.data import preprocess
from .protocol.messages import MSG_FINAL_MODEL, MSG_START, parse_json_payload
from .approx import accuracy

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CRYPTO = 4
EXIT_DEPTH = 5

# Per-dataset hyperparameter defaults (epochs, learning rate, batch size);
# the first row is also the global default when no flags are given.
DATASET_DEFAULTS = {
    "mnist": (5, 0.1, 1024),
    "cifar10": (5, 0.1, 1024),
    "face-mask": (10, 0.1, 512),
    "dermamnist": (12, 0.01, 512),
}

SECRET_KEY_FILE = "secret.key"
PUBLIC_KEY_FILE = "public.key"
EVAL_KEY_FILE = "eval.key"


# -- shared flag handling ------------------------------------------------------


def _add_training_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--preset", default="desk", choices=ckks.PRESET_NAMES,
                     help="scheme parameter preset (default: desk)")
    sub.add_argument("--epochs", type=int, default=None,
                     help="training epochs (default: per --defaults row)")
    sub.add_argument("--lr", type=float, default=None,
                     help="learning rate (default: per --defaults row)")
    sub.add_argument("--batch", type=int, default=None,
                     help="batch size (default: per --defaults row)")
    sub.add_argument("--refresh-interval", type=int, default=1,
                     help="batches between ciphertext refreshes (default: 1)")
    sub.add_argument("--seed", type=int, default=1,
                     help="seed for splits, shuffles and keys (default: 1)")
    sub.add_argument("--defaults", default="mnist",
                     choices=sorted(DATASET_DEFAULTS),
                     help="named hyperparameter row used for omitted flags "
                          "(default: mnist)")


def _resolve_config(args: argparse.Namespace) -> TrainingConfig:
    """Explicit flags win; omitted ones fall back to the --defaults row."""
    epochs, lr, batch = DATASET_DEFAULTS[args.defaults]
    return TrainingConfig(
        epochs=args.epochs if args.epochs is not None else epochs,
        learning_rate=args.lr if args.lr is not None else lr,
        batch_size=args.batch if args.batch is not None else batch,
        refresh_interval=args.refresh_interval,
        seed=args.seed,
        scheme_preset=args.preset,
    )


def _echo_config(config: TrainingConfig) -> None:
    print(
        f"config: preset={config.scheme_preset} epochs={config.epochs} "
        f"lr={config.learning_rate:g} batch={config.batch_size} "
        f"refresh-interval={config.refresh_interval} seed={config.seed}"
    )


def _load_dataset(args: argparse.Namespace) -> Tuple[np.ndarray, np.ndarray, int]:
    features, _ = load_features(args.features)
    labels, classes = load_labels(args.labels)
    if len(features) != len(labels):
        raise ParameterError(
            f"row count mismatch: {len(features)} feature rows vs "
            f"{len(labels)} labels"
        )
    return np.asarray(features, dtype=np.float64), labels, classes


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_bytes(path: str, data: bytes, private: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(data)
    if private:
        os.chmod(path, 0o600)


# -- training outputs ----------------------------------------------------------


def _test_rows(raw_features, raw_labels, config) -> Tuple[np.ndarray, np.ndarray]:
    """The raw (untransformed) rows of the held-out test split."""
    _, _, idx_test = split_indices(
        len(raw_features), config.split_ratios, config.seed
    )
    return raw_features[idx_test], raw_labels[idx_test]


def _write_run_outputs(
    out_dir: str,
    config: TrainingConfig,
    classes: int,
    weights: np.ndarray,
    stats,
    metrics,
    final_test_accuracy: Optional[float],
    wall_s: float,
    refresh_total: int,
    comparison: Optional[dict],
    raw_test: Tuple[np.ndarray, np.ndarray],
) -> RunReport:
    os.makedirs(out_dir, exist_ok=True)
    params = ckks.preset(config.scheme_preset)
    save_model(os.path.join(out_dir, "model.btmd"), weights,
               params.digest().hex(), stats)
    report = RunReport(
        config=config.to_json_dict(classes),
        metrics=list(metrics),
        final_test_accuracy=final_test_accuracy,
        train_wall_s=wall_s,
        refresh_total=refresh_total,
        comparison=comparison,
    )
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
    write_metrics_log(os.path.join(out_dir, "metrics.ndjson"), list(metrics))
    test_features, test_labels = raw_test
    save_features(os.path.join(out_dir, "test-features.btft"),
                  test_features, stats=None, dtype="f64")
    save_labels(os.path.join(out_dir, "test-labels.btlb"), test_labels,
                classes)
    return report


def _print_run_summary(report: RunReport) -> None:
    for m in report.metrics:
        print(
            f"epoch {m.epoch}: val_loss={m.val_loss:.6f} "
            f"val_acc={m.val_accuracy:.4f} refreshes={m.refresh_count} "
            f"wall_ms={m.wall_ms:.1f}"
        )
    if report.final_test_accuracy is not None:
        print(f"final test accuracy: {report.final_test_accuracy:.6f}")
    print(f"training wall time: {report.train_wall_s:.2f} s")
    print(f"total refreshes: {report.refresh_total}")
    if report.comparison:
        c = report.comparison
        print(
            "vs plaintext oracle: "
            f"plain_acc={c['plain_test_accuracy']:.6f} "
            f"gap={c['accuracy_gap']:+.6f} "
            f"plain_wall_s={c['plain_wall_s']:.3f}"
        )


def _oracle_comparison(raw_features, raw_labels, config, classes,
                       enc_accuracy: Optional[float]) -> dict:
    """Train the exact-softmax comparator on the same splits, in the clear."""
    from .protocol.data import prepare_splits

    train, val, test = prepare_splits(
        raw_features, raw_labels, config.split_ratios, config.seed
    )
    t0 = time.perf_counter()
    oracle = plaintext_oracle_train(train, val, config, softmax="exact")
    wall = time.perf_counter() - t0
    logits = test.features @ oracle.weights.T
    plain_acc = accuracy(logits, test.labels)
    gap = None if enc_accuracy is None else enc_accuracy - plain_acc
    return {
        "oracle_softmax": "exact",
        "plain_test_accuracy": plain_acc,
        "plain_wall_s": wall,
        "accuracy_gap": gap,
    }


# -- subcommands ---------------------------------------------------------------


def _cmd_keygen(args: argparse.Namespace) -> int:
    params = ckks.preset(args.preset)
    layout = TileLayout.for_dims(params, args.dim, args.classes)
    keys = ckks.keygen(
        params, args.seed,
        rotation_steps=rotation_steps_for(params, layout, args.classes),
    )
    os.makedirs(args.out, exist_ok=True)
    blobs = [
        (SECRET_KEY_FILE, ckks.secret_key_to_bytes(params, keys.secret), True),
        (PUBLIC_KEY_FILE, ckks.public_key_to_bytes(params, keys.public), False),
        (EVAL_KEY_FILE, ckks.eval_keys_to_bytes(params, keys.evaluation), False),
    ]
    for name, data, private in blobs:
        path = os.path.join(args.out, name)
        _write_bytes(path, data, private=private)
        print(f"wrote {path} ({len(data)} bytes)")
    print(f"scheme digest: {params.digest().hex()}")
    return EXIT_OK


def _load_key_bundle(params, keys_dir: str) -> ckks.KeyBundle:
    secret = ckks.secret_key_from_bytes(
        params, _read_bytes(os.path.join(keys_dir, SECRET_KEY_FILE)))
    public = ckks.public_key_from_bytes(
        params, _read_bytes(os.path.join(keys_dir, PUBLIC_KEY_FILE)))
    evaluation = ckks.eval_keys_from_bytes(
        params, _read_bytes(os.path.join(keys_dir, EVAL_KEY_FILE)))
    return ckks.KeyBundle(secret=secret, public=public, evaluation=evaluation)


def _cmd_synth_data(args: argparse.Namespace) -> int:
    features, labels = synth_blobs(
        args.classes, args.dim, args.n, args.seed, separation=args.separation
    )
    os.makedirs(args.out, exist_ok=True)
    fpath = os.path.join(args.out, "features.btft")
    lpath = os.path.join(args.out, "labels.btlb")
    save_features(fpath, features, stats=None, dtype="f64")
    save_labels(lpath, labels, args.classes)
    print(f"wrote {fpath} ({args.n} rows x {args.dim} cols, f64)")
    print(f"wrote {lpath} ({args.n} rows, {args.classes} classes)")
    return EXIT_OK


def _finish_training_run(args, config, classes, result, wall_s,
                         raw_features, raw_labels) -> int:
    enc_acc = None
    if result.test_logits is not None:
        enc_acc = accuracy(result.test_logits, result.client.test.labels)
    comparison = _oracle_comparison(
        raw_features, raw_labels, config, classes, enc_acc
    )
    report = _write_run_outputs(
        args.out, config, classes, result.weights,
        result.client.train.stats, result.metrics, enc_acc, wall_s,
        result.refresh_count, comparison,
        _test_rows(raw_features, raw_labels, config),
    )
    _print_run_summary(report)
    print(f"outputs in {args.out}")
    return EXIT_OK


def _cmd_train_local(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    _echo_config(config)
    raw_features, raw_labels, classes = _load_dataset(args)
    t0 = time.perf_counter()
    result = run_session(
        config, raw_features, raw_labels,
        session_dir=args.session, run_test_inference=True,
    )
    wall_s = time.perf_counter() - t0
    return _finish_training_run(
        args, config, classes, result, wall_s, raw_features, raw_labels
    )


def _cmd_encrypt(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    _echo_config(config)
    raw_features, raw_labels, classes = _load_dataset(args)
    params = ckks.preset(config.scheme_preset)
    if args.keys is not None:
        keys = _load_key_bundle(params, args.keys)
    else:
        _, _, idx = split_indices(len(raw_features), config.split_ratios,
                                  config.seed)
        dim = raw_features.shape[1]
        layout = TileLayout.for_dims(params, dim, classes)
        keys = ckks.keygen(
            params, config.seed,
            rotation_steps=rotation_steps_for(params, layout, classes),
        )
    client, _ = client_prepare(
        raw_features, raw_labels, config.split_ratios, config, keys
    )
    channel = DirectoryChannel(args.session, ORIGIN_CLIENT)
    print(f"client: session directory {args.session}; waiting for cloud peer")
    t0 = time.perf_counter()
    result = drive_session(client, channel, None, run_test_inference=True)
    wall_s = time.perf_counter() - t0
    return _finish_training_run(
        args, config, classes, result, wall_s, raw_features, raw_labels
    )


def _cmd_train_cloud(args: argparse.Namespace) -> int:
    channel = DirectoryChannel(args.session, ORIGIN_CLOUD)
    print(f"cloud: serving session directory {args.session}")
    Cloud().serve(channel)
    print("cloud: session complete")
    return EXIT_OK


def _cmd_train_plain(args: argparse.Namespace) -> int:
    from .protocol.data import prepare_splits

    config = _resolve_config(args)
    _echo_config(config)
    raw_features, raw_labels, classes = _load_dataset(args)
    train, val, test = prepare_splits(
        raw_features, raw_labels, config.split_ratios, config.seed
    )
    t0 = time.perf_counter()
    oracle = plaintext_oracle_train(train, val, config, softmax=args.softmax)
    wall_s = time.perf_counter() - t0
    test_acc = None
    if test.count:
        test_acc = accuracy(test.features @ oracle.weights.T, test.labels)
    report = _write_run_outputs(
        args.out, config, classes, oracle.weights, train.stats,
        oracle.metrics, test_acc, wall_s, 0, None,
        _test_rows(raw_features, raw_labels, config),
    )
    _print_run_summary(report)
    print(f"outputs in {args.out}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    for path in args.files:
        data = _read_bytes(path)
        magic = data[:4]
        if magic == b"BTFT":
            from .io import feature_file_from_bytes

            feats, stats = feature_file_from_bytes(data)
            # loaded arrays are always f64; byte 18 is the on-disk dtype code
            kind = "f32" if data[18] == 1 else "f64"
            extra = "with stats" if stats is not None else "no stats"
            print(f"ok: {path} feature file, {feats.shape[0]} rows x "
                  f"{feats.shape[1]} cols, {kind}, {extra}")
        elif magic == b"BTLB":
            from .io import label_file_from_bytes

            labels, classes = label_file_from_bytes(data)
            print(f"ok: {path} label file, {len(labels)} rows, "
                  f"{classes} classes")
        elif magic == b"BTMD":
            from .io import model_file_from_bytes

            weights, digest, stats = model_file_from_bytes(data)
            extra = "with stats" if stats is not None else "no stats"
            print(f"ok: {path} model file, {weights.shape[0]} classes x "
                  f"{weights.shape[1]} features, {extra}, "
                  f"scheme digest {digest[:16]}...")
        elif data[:1] in (b"{", b" "):
            report = RunReport.from_json(data.decode("utf-8"))
            print(f"ok: {path} run report, schema {report.schema}, "
                  f"{len(report.metrics)} epochs")
        else:
            raise FormatError(
                f"{path}: unknown leading magic {magic!r}; expected a "
                "feature/label/model file or a JSON report"
            )
    return EXIT_OK


def _cmd_decrypt_model(args: argparse.Namespace) -> int:
    transcript = load_transcript(args.session)
    envelopes = transcript.envelopes()
    start = next((e for e in envelopes if e.mtype == MSG_START), None)
    if start is None:
        raise ProtocolError("session transcript holds no start message")
    final = next(
        (e for e in reversed(envelopes) if e.mtype == MSG_FINAL_MODEL), None
    )
    if final is None:
        raise ProtocolError("session transcript holds no final model")
    info = parse_json_payload(start)
    cfg = info["config"]
    params = ckks.preset(cfg["scheme_preset"])
    if params.digest().hex() != final.digest:
        raise DigestMismatchError(
            "final model digest does not match the session's scheme preset"
        )
    secret = ckks.secret_key_from_bytes(params, _read_bytes(args.key))
    enc = enc_matrix_from_bytes(params, final.payload)
    weights = decrypt_matrix(params, secret, enc)

    stats = None
    if args.features is not None:
        raw_features, _ = load_features(args.features)
        idx_train, _, _ = split_indices(
            len(raw_features), tuple(cfg["split_ratios"]), int(cfg["seed"])
        )
        stats = standardize_fit(np.asarray(raw_features,
                                           dtype=np.float64)[idx_train])
    save_model(args.out, weights, params.digest().hex(), stats)
    extra = "with stats" if stats is not None else "no stats"
    print(f"wrote {args.out} ({weights.shape[0]} x {weights.shape[1]}, "
          f"{extra})")
    return EXIT_OK


def _cmd_infer(args: argparse.Namespace) -> int:
    weights, _, model_stats = load_model(args.model)
    features, file_stats = load_features(args.features)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != weights.shape[1]:
        raise DimensionError(
            f"feature width {features.shape[-1]} does not match model "
            f"width {weights.shape[1]}"
        )
    stats = model_stats if model_stats is not None else file_stats
    transformed = preprocess(features, stats) if stats is not None else features
    logits = transformed @ weights.T
    predictions = np.argmax(logits, axis=1).astype(np.uint16)
    save_labels(args.out, predictions, weights.shape[0])
    print(f"wrote {args.out} ({len(predictions)} predictions, "
          f"{weights.shape[0]} classes)")
    if args.labels is not None:
        truth, _ = load_labels(args.labels)
        if len(truth) != len(predictions):
            raise ParameterError(
                f"row count mismatch: {len(predictions)} predictions vs "
                f"{len(truth)} labels"
            )
        print(f"accuracy: {float(np.mean(predictions == truth)):.6f}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    report = RunReport.from_json(_read_bytes(args.run).decode("utf-8"))
    print(f"schema: {report.schema}")
    cfg = report.config
    print(
        f"config: preset={cfg.get('scheme_preset')} "
        f"epochs={cfg.get('epochs')} lr={cfg.get('learning_rate')} "
        f"batch={cfg.get('batch_size')} "
        f"refresh-interval={cfg.get('refresh_interval')} "
        f"seed={cfg.get('seed')}"
    )
    _print_run_summary(report)
    if args.metrics is not None:
        entries = read_metrics_log(args.metrics)
        print(f"metrics log: {len(entries)} entries from {args.metrics}")
    return EXIT_OK


# -- parser and dispatch -------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cipherfit",
        description="Train a softmax-regression head on encrypted features.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("keygen", help="generate key material")
    p.add_argument("--preset", default="desk", choices=ckks.PRESET_NAMES)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--dim", type=int, default=16,
                   help="feature width the keys must support (default: 16)")
    p.add_argument("--classes", type=int, default=3,
                   help="class count the keys must support (default: 3)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_keygen)

    p = subs.add_parser("synth-data", help="write a synthetic dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n", type=int, default=384)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--separation", type=float, default=4.0,
                   help="pairwise distance between class means (default: 4)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth_data)

    p = subs.add_parser(
        "encrypt",
        help="client role: encrypt, upload, serve refreshes, recover model",
    )
    _add_training_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--session", required=True,
                   help="session directory shared with the cloud peer")
    p.add_argument("--keys", default=None,
                   help="directory from `keygen` (default: derive from seed)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_encrypt)

    p = subs.add_parser("train-cloud",
                        help="cloud role: train on ciphertexts only")
    p.add_argument("--session", required=True,
                   help="session directory shared with the client peer")
    p.set_defaults(func=_cmd_train_cloud)

    p = subs.add_parser("train-local",
                        help="both roles in one process")
    _add_training_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--session", default=None,
                   help="optionally record the transcript to this directory")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train_local)

    p = subs.add_parser("train-plain",
                        help="plaintext comparator with the same trajectory")
    _add_training_flags(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--softmax", default="exact", choices=("exact", "approx"),
                   help="row softmax used in the clear (default: exact)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train_plain)

    p = subs.add_parser("validate", help="sanity-check data/model/report files")
    p.add_argument("files", nargs="+", help="paths to check")
    p.set_defaults(func=_cmd_validate)

    p = subs.add_parser("decrypt-model",
                        help="recover the model from a recorded session")
    p.add_argument("--session", required=True,
                   help="directory holding the recorded session frames")
    p.add_argument("--key", required=True, help="secret key file")
    p.add_argument("--features", default=None,
                   help="raw training features; restores the standardization "
                        "stats inside the model file")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=_cmd_decrypt_model)

    p = subs.add_parser("infer", help="score features with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", default=None,
                   help="optional truth labels; prints accuracy")
    p.add_argument("--out", required=True, help="output predictions file")
    p.set_defaults(func=_cmd_infer)

    p = subs.add_parser("report", help="pretty-print a run report")
    p.add_argument("--run", required=True, help="report.json path")
    p.add_argument("--metrics", default=None, help="metrics.ndjson path")
    p.set_defaults(func=_cmd_report)

    return parser


def _apply_thread_cap() -> None:
    raw = os.environ.get("BT_THREADS")
    if not raw:
        return
    try:
        count = int(raw)
    except ValueError:
        raise ParameterError(f"BT_THREADS must be an integer, got {raw!r}")
    if count < 1:
        raise ParameterError(f"BT_THREADS must be >= 1, got {count}")
    try:
        import numba

        numba.set_num_threads(min(count, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_thread_cap()
        return args.func(args)
    except DigestMismatchError as exc:
        print(f"cipherfit {args.command}: digest mismatch: {exc}",
              file=sys.stderr)
        return EXIT_CRYPTO
    except (KeyMissingError, ProtocolError) as exc:
        print(f"cipherfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_CRYPTO
    except DepthExhaustedError as exc:
        print(f"cipherfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_DEPTH
    except (ParameterError, DimensionError, LayoutError, CapacityError) as exc:
        print(f"cipherfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError) as exc:
        print(f"cipherfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except CipherfitError as exc:
        print(f"cipherfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
