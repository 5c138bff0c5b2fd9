"""Duplex channels between the two roles, with full transcript capture.

Two implementations: an in-process pair of blocking queues (tests,
`train-local`) and a directory of `msg-{seq:06}.bin` files for two-process
exchange.  Both record every frame in order, so a session transcript can be
scanned for leaked material and replayed deterministically.
"""

from __future__ import annotations

import os
import queue
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from ..errors import ProtocolError
from .messages import Envelope, frame_envelope, parse_frame

RECV_TIMEOUT_S = 600.0


class ChannelPoisoned(ProtocolError):
    """The peer failed and unblocked this end instead of sending a frame."""


@dataclass(frozen=True)
class FrameRecord:
    seq: int
    origin: int
    mtype: int
    data: bytes


@dataclass
class SessionTranscript:
    records: List[FrameRecord] = field(default_factory=list)

    def append(self, origin: int, mtype: int, data: bytes) -> None:
        self.records.append(FrameRecord(len(self.records), origin, mtype, data))

    def envelopes(self) -> List[Envelope]:
        return [parse_frame(r.data) for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


class InProcessChannel:
    """One end of a queue pair; send() also records into the transcript."""

    def __init__(self, outbox: "queue.Queue[bytes]",
                 inbox: "queue.Queue[bytes]",
                 transcript: SessionTranscript):
        self._outbox = outbox
        self._inbox = inbox
        self.transcript = transcript

    def send(self, env: Envelope) -> None:
        data = frame_envelope(env)
        self.transcript.append(env.origin, env.mtype, data)
        self._outbox.put(data)

    def poison(self) -> None:
        """Unblock the peer after a failure; its recv raises ProtocolError."""
        self._outbox.put(b"")

    def recv(self, timeout: Optional[float] = RECV_TIMEOUT_S) -> Envelope:
        try:
            data = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError("peer produced no message before timeout")
        if not data:
            raise ChannelPoisoned("peer failed; channel was poisoned")
        return parse_frame(data)


def inprocess_pair() -> Tuple[InProcessChannel, InProcessChannel,
                              SessionTranscript]:
    a_to_b: "queue.Queue[bytes]" = queue.Queue()
    b_to_a: "queue.Queue[bytes]" = queue.Queue()
    transcript = SessionTranscript()
    return (
        InProcessChannel(a_to_b, b_to_a, transcript),
        InProcessChannel(b_to_a, a_to_b, transcript),
        transcript,
    )


def _frame_path(session_dir: str, seq: int) -> str:
    return os.path.join(session_dir, f"msg-{seq:06d}.bin")


class DirectoryChannel:
    """File-exchange transport: every frame is one numbered file.

    Frame numbering is global across both directions; each end skips the
    files it wrote itself (identified by the origin byte).  The protocol is
    strictly turn-based, so at most one side writes at any time.
    """

    def __init__(self, session_dir: str, origin: int,
                 poll_interval: float = 0.002):
        os.makedirs(session_dir, exist_ok=True)
        self.session_dir = session_dir
        self.origin = origin
        self.poll_interval = poll_interval
        self._next_seq = 0

    def send(self, env: Envelope) -> None:
        data = frame_envelope(env)
        path = _frame_path(self.session_dir, self._next_seq)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.rename(tmp, path)
        self._next_seq += 1

    def recv(self, timeout: Optional[float] = RECV_TIMEOUT_S) -> Envelope:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            path = _frame_path(self.session_dir, self._next_seq)
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    env = parse_frame(fh.read())
                self._next_seq += 1
                if env.origin == self.origin:
                    continue
                return env
            if deadline is not None and time.monotonic() > deadline:
                raise ProtocolError(
                    f"no frame {self._next_seq} in {self.session_dir} "
                    f"before timeout"
                )
            time.sleep(self.poll_interval)


def load_transcript(session_dir: str) -> SessionTranscript:
    transcript = SessionTranscript()
    seq = 0
    while True:
        path = _frame_path(session_dir, seq)
        if not os.path.exists(path):
            break
        with open(path, "rb") as fh:
            data = fh.read()
        env = parse_frame(data)
        transcript.append(env.origin, env.mtype, data)
        seq += 1
    return transcript
