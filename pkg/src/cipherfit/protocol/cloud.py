"""The compute role: encrypted training on uploaded ciphertexts.

CloudState holds scheme parameters, evaluation keys, and ciphertexts —
there is no field for a secret key or for plaintext features, so role
separation is enforced by construction.  Whenever a working ciphertext runs
out of depth, the cloud sends a refresh request and blocks on the response.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .. import ckks
from ..approx import SoftmaxConfig, asoftmax, momentum_blends, nag_update
from ..errors import DigestMismatchError, ProtocolError
from ..linalg import (
    EncMatrix,
    TileLayout,
    enc_matrix_from_bytes,
    enc_matrix_to_bytes,
    mask_factory,
    mat_sub,
    matmul_abt,
    matmul_atb,
)
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
    ORIGIN_CLOUD,
    BlobReader,
    Envelope,
    blob,
    json_payload,
    parse_json_payload,
)

# levels a gradient step consumes downstream of the softmax: row mask (1),
# matmul_atb (3), then two plain scalings in the accelerated update
_POST_SOFTMAX_LEVELS = 6


def zero_matrix(params, rows: int, cols: int, layout: TileLayout) -> EncMatrix:
    """Transparent all-zero ciphertexts; decrypts to zero under any key."""
    shape = (params.max_level + 1, params.ring_degree)
    cts = tuple(
        ckks.Ciphertext(
            np.zeros(shape, dtype=np.uint64),
            np.zeros(shape, dtype=np.uint64),
            params.max_level,
            params.default_scale,
            params.digest(),
        )
        for _ in range(layout.ct_count(rows))
    )
    return EncMatrix(cts, rows, cols, layout)


@dataclass
class _Batch:
    valid_rows: int
    features: EncMatrix
    onehot: EncMatrix


class Cloud:
    """Message-driven state machine for the compute role."""

    def __init__(self):
        self.params = None
        self.layout: Optional[TileLayout] = None
        self.evk = None
        self.softmax_cfg: Optional[SoftmaxConfig] = None
        self.epochs = 0
        self.learning_rate = 0.0
        self.refresh_interval = 1
        self.classes = 0
        self.dim = 0
        self.batches: List[_Batch] = []
        self.val_features: Optional[EncMatrix] = None
        self.val_onehot: Optional[EncMatrix] = None
        self.weights: Optional[EncMatrix] = None
        self.lookahead: Optional[EncMatrix] = None
        self.t = 0
        self.session_id = 0
        self.digest = ""
        self._ref_seq = 0

    def _env(self, mtype: int, payload: bytes) -> Envelope:
        return Envelope(mtype, ORIGIN_CLOUD, self.session_id, self.digest,
                        payload)

    def _ack(self, channel, of: int) -> None:
        channel.send(self._env(MSG_ACK, json_payload({"of": of})))

    # -- setup messages ----------------------------------------------------

    def _handle_start(self, env: Envelope) -> None:
        info = parse_json_payload(env)
        cfg = info["config"]
        self.params = ckks.preset(cfg["scheme_preset"])
        if self.params.digest().hex() != env.digest:
            raise DigestMismatchError(
                "start: scheme digest does not match preset")
        self.session_id = env.session_id
        self.digest = env.digest
        self.epochs = int(cfg["epochs"])
        self.learning_rate = float(cfg["learning_rate"])
        self.refresh_interval = int(cfg["refresh_interval"])
        self.softmax_cfg = SoftmaxConfig(**cfg["softmax"])
        self.classes = int(info["classes"])
        self.dim = int(info["dim"])
        self.layout = TileLayout.for_dims(self.params, self.dim, self.classes)

    def _handle_dataset(self, env: Envelope) -> None:
        if self.params is None:
            raise ProtocolError("dataset before start")
        rd = BlobReader(env.payload, "dataset")
        count = rd.u32()
        batches = []
        for _ in range(count):
            valid = rd.u32()
            feats = enc_matrix_from_bytes(self.params, rd.blob())
            onehot = enc_matrix_from_bytes(self.params, rd.blob())
            if feats.rows != valid or onehot.rows != valid:
                raise ProtocolError(
                    f"dataset: batch declares {valid} rows, "
                    f"carries {feats.rows}/{onehot.rows}"
                )
            batches.append(_Batch(valid, feats, onehot))
        self.val_features = enc_matrix_from_bytes(self.params, rd.blob())
        self.val_onehot = enc_matrix_from_bytes(self.params, rd.blob())
        rd.done()
        if not batches:
            raise ProtocolError("dataset: no training batches")
        self.batches = batches

    # -- depth refreshes ---------------------------------------------------

    def _refresh_ct(self, channel, ct: ckks.Ciphertext) -> ckks.Ciphertext:
        ref_id = self._ref_seq
        self._ref_seq += 1
        payload = struct.pack("<I", ref_id) + blob(
            ckks.ciphertext_to_bytes(self.params, ct)
        )
        channel.send(self._env(MSG_REFRESH_REQ, payload))
        env = channel.recv()
        if env.mtype != MSG_REFRESH_RESP:
            raise ProtocolError(
                f"expected refresh-response, got {env.name}"
            )
        rd = BlobReader(env.payload, "refresh-response")
        got_id = rd.u32()
        if got_id != ref_id:
            raise ProtocolError(
                f"refresh id {got_id} does not match request {ref_id}"
            )
        fresh = ckks.ciphertext_from_bytes(self.params, rd.blob())
        rd.done()
        return fresh

    def _refresh_mat(self, channel, em: EncMatrix) -> EncMatrix:
        return em.replace_cts(
            self._refresh_ct(channel, ct) for ct in em.cts
        )

    def _ensure_mat(self, channel, em: EncMatrix, level: int) -> EncMatrix:
        if em.level < level:
            return self._refresh_mat(channel, em)
        return em

    # -- training ----------------------------------------------------------

    def _row_mask(self, em: EncMatrix, valid_rows: int) -> EncMatrix:
        """Zero every slot beyond the first valid_rows rows; costs a level."""
        masks = mask_factory(self.params, em.layout)
        spc = em.layout.seg_per_ct
        out = []
        for t, ct in enumerate(em.cts):
            rows_here = min(spc, max(0, valid_rows - t * spc))
            pt = masks.matrix_region(rows_here, em.cols, 1.0, ct.level)
            out.append(ckks.mult_plain(self.params, ct, pt))
        return em.replace_cts(out)

    def _nag_step(self, channel, batch: _Batch, gamma: float) -> None:
        refresh = lambda ct: self._refresh_ct(channel, ct)
        self.lookahead = self._ensure_mat(channel, self.lookahead, 3)
        self.weights = self._ensure_mat(channel, self.weights, 1)

        logits = matmul_abt(self.params, self.evk, batch.features,
                            self.lookahead)
        probs = asoftmax(self.params, self.evk, logits, self.softmax_cfg,
                         valid_rows=batch.valid_rows, refresh=refresh)
        resid = mat_sub(self.params, probs, batch.onehot)
        resid = self._ensure_mat(channel, resid, _POST_SOFTMAX_LEVELS)
        resid = self._row_mask(resid, batch.valid_rows)
        grad = matmul_atb(self.params, self.evk, resid, batch.features)
        self.weights, self.lookahead = nag_update(
            self.params,
            self.lookahead,
            grad,
            self.weights,
            self.learning_rate / batch.valid_rows,
            gamma,
        )

    def _send_validation(self, channel, epoch: int) -> None:
        self.weights = self._ensure_mat(channel, self.weights, 3)
        logits = matmul_abt(self.params, self.evk, self.val_features,
                            self.weights)
        payload = struct.pack("<II", epoch, self.t) + blob(
            enc_matrix_to_bytes(self.params, logits)
        )
        channel.send(self._env(MSG_ENC_LOGITS, payload))
        env = channel.recv()
        if env.mtype != MSG_ACK:
            raise ProtocolError(f"expected ack of logits, got {env.name}")

    def _train(self, channel) -> None:
        if not self.batches or self.evk is None:
            raise ProtocolError("train before dataset or eval keys")
        self.weights = zero_matrix(self.params, self.classes, self.dim,
                                   self.layout)
        self.lookahead = zero_matrix(self.params, self.classes, self.dim,
                                     self.layout)
        self.t = 0
        gammas = momentum_blends(self.epochs * len(self.batches))
        for epoch in range(self.epochs):
            for batch in self.batches:
                self._nag_step(channel, batch, gammas[self.t])
                self.t += 1
                if self.t % self.refresh_interval == 0:
                    self.weights = self._refresh_mat(channel, self.weights)
                    self.lookahead = self._refresh_mat(channel,
                                                       self.lookahead)
            self._send_validation(channel, epoch)
        channel.send(self._env(
            MSG_FINAL_MODEL, enc_matrix_to_bytes(self.params, self.weights)
        ))

    def _infer(self, channel, env: Envelope) -> None:
        if self.weights is None:
            raise ProtocolError("inference before training")
        features = enc_matrix_from_bytes(self.params, env.payload)
        if features.rows < 1:
            raise ProtocolError("inference batch is empty")
        self.weights = self._ensure_mat(channel, self.weights, 3)
        logits = matmul_abt(self.params, self.evk, features, self.weights)
        channel.send(self._env(
            MSG_INFER_RESP, enc_matrix_to_bytes(self.params, logits)
        ))

    # -- main loop ----------------------------------------------------------

    def serve(self, channel) -> None:
        while True:
            env = channel.recv()
            if self.params is not None and (
                env.session_id != self.session_id
                or env.digest != self.digest
            ):
                raise ProtocolError(f"{env.name}: wrong session or digest")
            if env.mtype == MSG_START:
                self._handle_start(env)
                self._ack(channel, MSG_START)
            elif env.mtype == MSG_EVAL_KEYS:
                self.evk = ckks.eval_keys_from_bytes(self.params, env.payload)
                self._ack(channel, MSG_EVAL_KEYS)
            elif env.mtype == MSG_DATASET:
                self._handle_dataset(env)
                self._ack(channel, MSG_DATASET)
            elif env.mtype == MSG_TRAIN:
                self._train(channel)
            elif env.mtype == MSG_INFER_REQ:
                self._infer(channel, env)
            elif env.mtype == MSG_DONE:
                return
            else:
                raise ProtocolError(f"unexpected {env.name} at cloud")
