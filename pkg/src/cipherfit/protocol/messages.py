"""Wire format for the two-role training protocol.

Every message is one length-prefixed frame:

    u32 body_len | body
    body = u16 type | u8 origin | u32 session_id | u8 digest_len
         | digest ascii | payload

The digest pins the scheme parameters both roles must share; the origin
byte lets the file-exchange transport skip frames it wrote itself.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from ..errors import FormatError, ProtocolError

MSG_START = 1
MSG_EVAL_KEYS = 2
MSG_DATASET = 3
MSG_TRAIN = 4
MSG_REFRESH_REQ = 5
MSG_REFRESH_RESP = 6
MSG_ENC_LOGITS = 7
MSG_ACK = 8
MSG_FINAL_MODEL = 9
MSG_INFER_REQ = 10
MSG_INFER_RESP = 11
MSG_DONE = 12

MESSAGE_NAMES = {
    MSG_START: "start",
    MSG_EVAL_KEYS: "eval-keys",
    MSG_DATASET: "dataset",
    MSG_TRAIN: "train",
    MSG_REFRESH_REQ: "refresh-request",
    MSG_REFRESH_RESP: "refresh-response",
    MSG_ENC_LOGITS: "enc-logits",
    MSG_ACK: "ack",
    MSG_FINAL_MODEL: "final-model",
    MSG_INFER_REQ: "infer-request",
    MSG_INFER_RESP: "infer-response",
    MSG_DONE: "done",
}

ORIGIN_CLIENT = 1
ORIGIN_CLOUD = 2

CLIENT_TYPES = frozenset(
    (MSG_START, MSG_EVAL_KEYS, MSG_DATASET, MSG_TRAIN, MSG_REFRESH_RESP,
     MSG_ACK, MSG_INFER_REQ, MSG_DONE)
)
CLOUD_TYPES = frozenset(
    (MSG_ACK, MSG_REFRESH_REQ, MSG_ENC_LOGITS, MSG_FINAL_MODEL,
     MSG_INFER_RESP)
)


@dataclass(frozen=True)
class Envelope:
    mtype: int
    origin: int
    session_id: int
    digest: str
    payload: bytes

    @property
    def name(self) -> str:
        return MESSAGE_NAMES.get(self.mtype, f"type-{self.mtype}")


def frame_envelope(env: Envelope) -> bytes:
    digest = env.digest.encode("ascii")
    if len(digest) > 255:
        raise FormatError("params digest longer than 255 bytes")
    body = (
        struct.pack("<HBIB", env.mtype, env.origin, env.session_id,
                    len(digest))
        + digest
        + env.payload
    )
    return struct.pack("<I", len(body)) + body


def parse_frame(data: bytes) -> Envelope:
    if len(data) < 4:
        raise FormatError("frame shorter than its length prefix")
    (body_len,) = struct.unpack_from("<I", data)
    if len(data) != 4 + body_len:
        raise FormatError(
            f"frame length {len(data)} != 4 + declared {body_len}"
        )
    if body_len < 8:
        raise FormatError(f"frame body of {body_len} bytes is too short")
    mtype, origin, session_id, digest_len = struct.unpack_from("<HBIB", data, 4)
    off = 4 + 8
    if off + digest_len > len(data):
        raise FormatError("frame truncated inside the digest field")
    digest = data[off : off + digest_len].decode("ascii")
    payload = data[off + digest_len :]
    if origin not in (ORIGIN_CLIENT, ORIGIN_CLOUD):
        raise FormatError(f"unknown origin byte {origin}")
    return Envelope(mtype, origin, session_id, digest, payload)


def json_payload(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode()


def parse_json_payload(env: Envelope):
    try:
        return json.loads(env.payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{env.name}: bad json payload: {exc}") from exc


def blob(data: bytes) -> bytes:
    return struct.pack("<Q", len(data)) + data


class BlobReader:
    """Sequential reader for composite payloads."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.off = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(
                f"{self.what}: truncated at byte {self.off}"
            )
        piece = self.data[self.off : self.off + n]
        self.off += n
        return piece

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u64())

    def done(self) -> None:
        if self.off != len(self.data):
            raise FormatError(
                f"{self.what}: {len(self.data) - self.off} trailing byte(s)"
            )


def expect(env: Envelope, mtype: int, session_id: int, digest: str) -> Envelope:
    if env.mtype != mtype:
        raise ProtocolError(
            f"expected {MESSAGE_NAMES[mtype]}, got {env.name}"
        )
    if env.session_id != session_id:
        raise ProtocolError(
            f"{env.name}: session {env.session_id}, expected {session_id}"
        )
    if env.digest != digest:
        raise ProtocolError(f"{env.name}: scheme digest mismatch")
    return env
