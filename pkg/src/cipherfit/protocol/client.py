"""The data-owner role: keys, plaintext splits, refresh service, metrics.

The client is the only party that ever touches the secret key.  It encrypts
the prepared splits, then serves the cloud's depth-refresh round trips,
scores the per-epoch validation logits, and finally decrypts the trained
weights.
"""

from __future__ import annotations

import struct
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import ckks
from ..approx import SoftmaxConfig, accuracy, cross_entropy, softmax_exact
from ..errors import ParameterError, ProtocolError
from ..io.report import EpochMetrics
from ..linalg import (
    EncMatrix,
    TileLayout,
    decrypt_matrix,
    enc_matrix_from_bytes,
    enc_matrix_to_bytes,
    encrypt_matrix,
)
from .data import FeatureDataset, prepare_splits
from .messages import (
    MSG_ACK,
    MSG_DATASET,
    MSG_DONE,
    MSG_ENC_LOGITS,
    MSG_EVAL_KEYS,
    MSG_FINAL_MODEL,
    MSG_INFER_REQ,
    MSG_INFER_RESP,
    MSG_REFRESH_REQ,
    MSG_REFRESH_RESP,
    MSG_START,
    MSG_TRAIN,
    ORIGIN_CLIENT,
    BlobReader,
    Envelope,
    blob,
    expect,
    json_payload,
    parse_json_payload,
)

DEFAULT_SPLIT = (0.6, 0.2, 0.2)
DEFAULT_LOGIT_BOUND = 8.0
DEFAULT_SOFTMAX_TARGET = 0.01


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters shared by both roles and the plaintext comparator."""

    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 1024
    refresh_interval: int = 1
    seed: int = 1
    scheme_preset: str = "desk"
    softmax: Optional[SoftmaxConfig] = None
    split_ratios: Tuple[float, float, float] = DEFAULT_SPLIT

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(
                f"batch_size must be >= 1, got {self.batch_size}"
            )
        if self.learning_rate <= 0:
            raise ParameterError(
                f"learning_rate must be > 0, got {self.learning_rate}"
            )
        if self.refresh_interval < 1:
            raise ParameterError(
                f"refresh_interval must be >= 1, got {self.refresh_interval}"
            )

    def softmax_for(self, classes: int) -> SoftmaxConfig:
        if self.softmax is not None:
            return self.softmax
        return SoftmaxConfig.for_bound(
            classes, DEFAULT_LOGIT_BOUND, DEFAULT_SOFTMAX_TARGET
        )

    def to_json_dict(self, classes: int) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "refresh_interval": self.refresh_interval,
            "seed": self.seed,
            "scheme_preset": self.scheme_preset,
            "softmax": asdict(self.softmax_for(classes)),
            "split_ratios": list(self.split_ratios),
        }


def batch_plan(count: int, batch_size: int) -> List[Tuple[int, int]]:
    """Fixed sequential batches; the last one is simply shorter."""
    return [
        (start, min(start + batch_size, count))
        for start in range(0, count, batch_size)
    ]


def session_id_for(seed: int) -> int:
    return (seed * 2654435761 + 97) & 0xFFFFFFFF


def rotation_steps_for(params, layout: TileLayout,
                       classes: int) -> Tuple[int, ...]:
    """Key steps the kernels need: power-of-two folds plus the per-column
    placement rotations for up to `classes` result columns."""
    steps = set(ckks.default_rotation_steps(params))
    for j in range(1, classes):
        steps.update((j, -j))
        if j < layout.seg_per_ct:
            steps.update((j * layout.seg_width, -j * layout.seg_width))
    return tuple(sorted(steps))


class Client:
    """Holds the key bundle and the plaintext splits; never ships either."""

    def __init__(self, params, keys, config: TrainingConfig,
                 train: FeatureDataset, val: FeatureDataset,
                 test: FeatureDataset):
        if train.count < 1 or val.count < 1:
            raise ParameterError("train and val splits must be non-empty")
        self.params = params
        self.keys = keys
        self.config = config
        self.train = train
        self.val = val
        self.test = test
        self.layout = TileLayout.for_dims(params, train.dim, train.classes)
        self.session_id = session_id_for(config.seed)
        self.digest = params.digest().hex()
        self.metrics: List[EpochMetrics] = []
        self.refresh_count = 0
        self._rng = np.random.Generator(
            np.random.PCG64(config.seed ^ 0x5EED5EED)
        )
        self._epoch_mark = time.monotonic()
        self._upload: Optional[List[Envelope]] = None

    def _env(self, mtype: int, payload: bytes) -> Envelope:
        return Envelope(mtype, ORIGIN_CLIENT, self.session_id, self.digest,
                        payload)

    def _encrypt(self, mat: np.ndarray) -> bytes:
        em = encrypt_matrix(self.params, self.keys.public, mat, self.layout,
                            rng=self._rng)
        return enc_matrix_to_bytes(self.params, em)

    def upload_envelopes(self) -> List[Envelope]:
        if self._upload is not None:  # encryption is costly; build once
            return self._upload
        cfg = self.config
        plan = batch_plan(self.train.count, cfg.batch_size)
        start_info = {
            "config": cfg.to_json_dict(self.train.classes),
            "dim": self.train.dim,
            "classes": self.train.classes,
            "train_rows": self.train.count,
            "val_rows": self.val.count,
            "batch_valid_rows": [stop - start for start, stop in plan],
        }

        body = bytearray(struct.pack("<I", len(plan)))
        for start, stop in plan:
            body += struct.pack("<I", stop - start)
            body += blob(self._encrypt(self.train.features[start:stop]))
            body += blob(self._encrypt(self.train.onehot[start:stop]))
        body += blob(self._encrypt(self.val.features))
        body += blob(self._encrypt(self.val.onehot))

        evk_blob = ckks.eval_keys_to_bytes(self.params, self.keys.evaluation)
        self._upload = [
            self._env(MSG_START, json_payload(start_info)),
            self._env(MSG_EVAL_KEYS, evk_blob),
            self._env(MSG_DATASET, bytes(body)),
            self._env(MSG_TRAIN, b""),
        ]
        return self._upload

    def refresh_ciphertext(self, ct: ckks.Ciphertext) -> ckks.Ciphertext:
        """Decrypt, re-encode at full depth and default scale, re-encrypt."""
        pt = ckks.decrypt(self.params, self.keys.secret, ct)
        values = ckks.decode(self.params, pt)
        fresh = ckks.encode(self.params, values)
        self.refresh_count += 1
        return ckks.encrypt(self.params, self.keys.public, fresh,
                            rng=self._rng)

    def score_logits(self, logits: np.ndarray,
                     labels: np.ndarray) -> Tuple[float, float]:
        probs = softmax_exact(logits)
        return cross_entropy(probs, labels), accuracy(probs, labels)

    def _handle_refresh(self, channel, env: Envelope) -> None:
        rd = BlobReader(env.payload, "refresh-request")
        ref_id = rd.u32()
        ct = ckks.ciphertext_from_bytes(self.params, rd.blob())
        rd.done()
        fresh = self.refresh_ciphertext(ct)
        payload = struct.pack("<I", ref_id) + blob(
            ckks.ciphertext_to_bytes(self.params, fresh)
        )
        channel.send(self._env(MSG_REFRESH_RESP, payload))

    def _handle_logits(self, channel, env: Envelope) -> None:
        rd = BlobReader(env.payload, "enc-logits")
        epoch = rd.u32()
        t = rd.u32()
        em = enc_matrix_from_bytes(self.params, rd.blob())
        rd.done()
        logits = decrypt_matrix(self.params, self.keys.secret, em)
        loss, acc = self.score_logits(logits, self.val.labels)
        now = time.monotonic()
        self.metrics.append(
            EpochMetrics(
                epoch=epoch,
                t=t,
                val_loss=loss,
                val_accuracy=acc,
                refresh_count=self.refresh_count,
                wall_ms=(now - self._epoch_mark) * 1e3,
            )
        )
        self._epoch_mark = now
        channel.send(self._env(MSG_ACK, json_payload({"of": env.mtype})))

    def serve_training(self, channel) -> np.ndarray:
        """Answer the cloud until the final model arrives; returns weights."""
        self._epoch_mark = time.monotonic()
        while True:
            env = channel.recv()
            if env.session_id != self.session_id or env.digest != self.digest:
                raise ProtocolError(f"{env.name}: wrong session or digest")
            if env.mtype == MSG_REFRESH_REQ:
                self._handle_refresh(channel, env)
            elif env.mtype == MSG_ENC_LOGITS:
                self._handle_logits(channel, env)
            elif env.mtype == MSG_FINAL_MODEL:
                em = enc_matrix_from_bytes(self.params, env.payload)
                return decrypt_matrix(self.params, self.keys.secret, em)
            else:
                raise ProtocolError(
                    f"unexpected {env.name} while serving training"
                )

    def infer(self, channel, features: np.ndarray) -> np.ndarray:
        """Encrypted inference round trip; returns plaintext logits."""
        if features.shape[0] < 1:
            raise ParameterError("inference batch is empty")
        channel.send(self._env(MSG_INFER_REQ, self._encrypt(features)))
        while True:
            env = channel.recv()
            if env.mtype == MSG_REFRESH_REQ:
                self._handle_refresh(channel, env)
            elif env.mtype == MSG_INFER_RESP:
                em = enc_matrix_from_bytes(self.params, env.payload)
                return decrypt_matrix(self.params, self.keys.secret, em)
            else:
                raise ProtocolError(f"unexpected {env.name} during inference")

    def finish(self, channel) -> None:
        channel.send(self._env(MSG_DONE, b""))

    def await_ack(self, channel, of: int) -> None:
        env = expect(channel.recv(), MSG_ACK, self.session_id, self.digest)
        got = parse_json_payload(env)
        if got.get("of") != of:
            raise ProtocolError(f"ack for {got.get('of')}, expected {of}")


def client_prepare(raw_features: np.ndarray, raw_labels: np.ndarray,
                   split_ratios: Sequence[float], config: TrainingConfig,
                   keys) -> Tuple[Client, List[Envelope]]:
    """Split, standardize on train, one-hot, encrypt, and build the upload."""
    from ..ckks import preset

    params = preset(config.scheme_preset)
    train, val, test = prepare_splits(
        raw_features, raw_labels, tuple(split_ratios), config.seed
    )
    client = Client(params, keys, config, train, val, test)
    return client, client.upload_envelopes()
