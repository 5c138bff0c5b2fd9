"""End-to-end session driver, transcript replay, and the privacy scan."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .. import ckks
from ..errors import ProtocolError
from ..io.report import EpochMetrics
from .client import Client, TrainingConfig, rotation_steps_for
from .cloud import Cloud
from .data import prepare_splits
from .messages import (
    CLIENT_TYPES,
    CLOUD_TYPES,
    MSG_FINAL_MODEL,
    MSG_TRAIN,
    ORIGIN_CLIENT,
    ORIGIN_CLOUD,
    Envelope,
    frame_envelope,
    parse_frame,
)
from .transport import (
    ChannelPoisoned,
    DirectoryChannel,
    SessionTranscript,
    inprocess_pair,
)


@dataclass
class SessionResult:
    weights: np.ndarray
    metrics: List[EpochMetrics]
    transcript: Optional[SessionTranscript]
    refresh_count: int
    test_logits: Optional[np.ndarray] = None
    client: Optional[Client] = None


def _run_cloud(channel, box: dict) -> None:
    try:
        Cloud().serve(channel)
    except ChannelPoisoned:
        pass  # the client already failed; its exception is the root cause
    except BaseException as exc:  # joined and re-raised by the driver
        box["error"] = exc
        if hasattr(channel, "poison"):
            channel.poison()


def drive_session(client: Client, client_channel, cloud_channel=None,
                  run_test_inference: bool = False) -> SessionResult:
    """Send the upload, serve refreshes, and collect the trained weights.

    When `cloud_channel` is given the cloud role runs on a background
    thread; otherwise an external process is expected on the peer side.
    """
    thread = None
    box: dict = {}
    if cloud_channel is not None:
        thread = threading.Thread(
            target=_run_cloud, args=(cloud_channel, box), daemon=True
        )
        thread.start()
    try:
        for env in client.upload_envelopes():
            client_channel.send(env)
            if env.mtype != MSG_TRAIN:
                client.await_ack(client_channel, env.mtype)
        weights = client.serve_training(client_channel)
        test_logits = None
        if run_test_inference and client.test.count:
            test_logits = client.infer(client_channel, client.test.features)
        client.finish(client_channel)
    except BaseException:
        # Unblock the peer so the join below returns promptly; a genuine
        # cloud-side failure recorded in `box` still wins below.
        if thread is not None and hasattr(client_channel, "poison"):
            client_channel.poison()
        if thread is not None:
            thread.join(timeout=30.0)
        if box.get("error") is not None:
            raise box["error"] from None
        raise
    if thread is not None:
        thread.join(timeout=600.0)
        if box.get("error") is not None:
            raise box["error"]
    transcript = getattr(client_channel, "transcript", None)
    return SessionResult(
        weights=weights,
        metrics=client.metrics,
        transcript=transcript,
        refresh_count=client.refresh_count,
        test_logits=test_logits,
        client=client,
    )


def run_session(
    config: TrainingConfig,
    raw_features: np.ndarray,
    raw_labels: np.ndarray,
    session_dir: Optional[str] = None,
    run_test_inference: bool = False,
    keys=None,
) -> SessionResult:
    """Both roles end to end: in-process queues, or a session directory."""
    params = ckks.preset(config.scheme_preset)
    train, val, test = prepare_splits(
        raw_features, raw_labels, config.split_ratios, config.seed
    )
    if keys is None:
        from ..linalg import TileLayout

        layout = TileLayout.for_dims(params, train.dim, train.classes)
        keys = ckks.keygen(
            params,
            config.seed,
            rotation_steps=rotation_steps_for(params, layout, train.classes),
        )
    client = Client(params, keys, config, train, val, test)
    if session_dir is None:
        client_ch, cloud_ch, _ = inprocess_pair()
    else:
        client_ch = DirectoryChannel(session_dir, ORIGIN_CLIENT)
        cloud_ch = DirectoryChannel(session_dir, ORIGIN_CLOUD)
    return drive_session(client, client_ch, cloud_ch, run_test_inference)


# -- replay ------------------------------------------------------------------


class _ReplayChannel:
    """Feeds recorded client frames and checks cloud frames byte for byte."""

    def __init__(self, transcript: SessionTranscript):
        self.frames = [r.data for r in transcript.records]
        self.pos = 0

    def _advance_to_client_frame(self) -> bytes:
        while self.pos < len(self.frames):
            data = self.frames[self.pos]
            env = parse_frame(data)
            self.pos += 1
            if env.origin == ORIGIN_CLIENT:
                return data
        raise ProtocolError("replay: transcript exhausted")

    def recv(self, timeout: Optional[float] = None) -> Envelope:
        return parse_frame(self._advance_to_client_frame())

    def send(self, env: Envelope) -> None:
        while self.pos < len(self.frames):
            expected = self.frames[self.pos]
            if parse_frame(expected).origin == ORIGIN_CLOUD:
                break
            self.pos += 1
        else:
            raise ProtocolError("replay: cloud sent more than was recorded")
        got = frame_envelope(env)
        if got != expected:
            raise ProtocolError(
                f"replay diverged at frame {self.pos}: "
                f"{env.name} does not match the recording"
            )
        self.pos += 1


def replay_transcript(transcript: SessionTranscript) -> bytes:
    """Re-run the cloud on the recorded inputs.

    Every cloud-originated frame must reproduce the recording exactly;
    returns the final-model payload (identical bytes to the recorded one).
    """
    channel = _ReplayChannel(transcript)
    Cloud().serve(channel)
    for rec in transcript.records:
        if rec.mtype == MSG_FINAL_MODEL:
            return parse_frame(rec.data).payload
    raise ProtocolError("replay: transcript holds no final model")


# -- privacy scan --------------------------------------------------------------


def forbidden_material(client: Client) -> List[Tuple[str, bytes]]:
    """Byte strings that must never appear in any protocol frame."""
    sk = client.keys.secret
    out = [
        ("secret-key-signs", sk.signs.tobytes()),
        ("secret-key-serialized",
         ckks.secret_key_to_bytes(client.params, sk)[:256]),
    ]
    for ds in (client.train, client.val, client.test):
        out.append(
            (f"{ds.tag}-features-f64", np.ascontiguousarray(
                ds.features, dtype="<f8").tobytes()[:4096])
        )
        out.append(
            (f"{ds.tag}-features-f32", np.ascontiguousarray(
                ds.features, dtype="<f4").tobytes()[:4096])
        )
    return out


def scan_transcript(transcript: SessionTranscript,
                    forbidden: List[Tuple[str, bytes]]) -> List[str]:
    """Returns violations: unexpected message kinds or leaked byte strings."""
    violations = []
    allowed = {ORIGIN_CLIENT: CLIENT_TYPES, ORIGIN_CLOUD: CLOUD_TYPES}
    for rec in transcript.records:
        env = parse_frame(rec.data)
        if env.mtype not in allowed.get(env.origin, frozenset()):
            violations.append(
                f"frame {rec.seq}: {env.name} not allowed from "
                f"origin {env.origin}"
            )
        for label, needle in forbidden:
            if needle and needle in rec.data:
                violations.append(
                    f"frame {rec.seq}: contains {label}"
                )
    return violations
