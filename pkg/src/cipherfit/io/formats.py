"""Binary file formats for features, labels, and trained models.

All three formats are little-endian with a 4-byte magic and a u16 version.
Layouts:

  features  "BTFT" | version u16 | rows u64 | cols u32 | dtype u8 (1=f32, 2=f64)
            | stats u8 (0/1) | [means f64*cols | stds f64*cols] | payload rows*cols
  labels    "BTLB" | version u16 | rows u64 | class_count u32 | payload u16*rows
  model     "BTMD" | version u16 | classes u32 | dim u32 | digest_len u8
            | digest ascii | stats u8 (0/1) | [means f64*dim | stds f64*dim]
            | payload f64 classes*dim

Readers reject wrong magic, unknown versions, truncation, and trailing bytes,
reporting the byte offset of the violation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import FormatError

FEATURE_MAGIC = b"BTFT"
LABEL_MAGIC = b"BTLB"
MODEL_MAGIC = b"BTMD"
FORMAT_VERSION = 1

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


@dataclass(frozen=True)
class Standardization:
    """Per-feature affine transform fitted on a training split."""

    means: np.ndarray
    stds: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.means) / self.stds


class _Cursor:
    """Sequential reader that reports byte offsets on failure."""

    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.off = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(
                f"{self.what}: truncated at byte {self.off} "
                f"(needed {n} more, have {len(self.blob) - self.off})"
            )
        piece = self.blob[self.off : self.off + n]
        self.off += n
        return piece

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        raw = self.take(dtype.itemsize * count)
        return np.frombuffer(raw, dtype=dtype).copy()

    def done(self) -> None:
        if self.off != len(self.blob):
            raise FormatError(
                f"{self.what}: {len(self.blob) - self.off} trailing byte(s) "
                f"at byte {self.off}"
            )


def _check_header(cur: _Cursor, magic: bytes) -> None:
    got = cur.take(4)
    if got != magic:
        raise FormatError(
            f"{cur.what}: bad magic {got!r} at byte 0 (want {magic!r})"
        )
    (version,) = cur.unpack("H")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{cur.what}: unsupported version {version} at byte 4"
        )


def _stats_block(cur: _Cursor, cols: int) -> Optional[Standardization]:
    (flag,) = cur.unpack("B")
    if flag == 0:
        return None
    if flag != 1:
        raise FormatError(
            f"{cur.what}: bad stats flag {flag} at byte {cur.off - 1}"
        )
    means = cur.array(np.dtype("<f8"), cols)
    stds = cur.array(np.dtype("<f8"), cols)
    return Standardization(means=means, stds=stds)


def _stats_bytes(stats: Optional[Standardization], cols: int) -> bytes:
    if stats is None:
        return struct.pack("<B", 0)
    if stats.means.shape != (cols,) or stats.stds.shape != (cols,):
        raise FormatError(
            f"standardization stats shaped {stats.means.shape}, want ({cols},)"
        )
    return (
        struct.pack("<B", 1)
        + np.ascontiguousarray(stats.means, dtype="<f8").tobytes()
        + np.ascontiguousarray(stats.stds, dtype="<f8").tobytes()
    )


def feature_file_to_bytes(
    features: np.ndarray,
    stats: Optional[Standardization] = None,
    dtype: str = "f32",
) -> bytes:
    if features.ndim != 2:
        raise FormatError(f"feature matrix must be 2-d, got {features.ndim}-d")
    code = 1 if dtype == "f32" else 2
    np_dtype = _DTYPE_CODES[code]
    rows, cols = features.shape
    head = FEATURE_MAGIC + struct.pack(
        "<HQIB", FORMAT_VERSION, rows, cols, code
    )
    body = np.ascontiguousarray(features, dtype=np_dtype).tobytes()
    return head + _stats_bytes(stats, cols) + body


def feature_file_from_bytes(
    blob: bytes,
) -> Tuple[np.ndarray, Optional[Standardization]]:
    cur = _Cursor(blob, "feature file")
    _check_header(cur, FEATURE_MAGIC)
    rows, cols, code = cur.unpack("QIB")
    if code not in _DTYPE_CODES:
        raise FormatError(
            f"feature file: unknown dtype code {code} at byte {cur.off - 1}"
        )
    stats = _stats_block(cur, cols)
    data = cur.array(_DTYPE_CODES[code], rows * cols)
    cur.done()
    return data.astype(np.float64).reshape(rows, cols), stats


def label_file_to_bytes(labels: np.ndarray, class_count: int) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise FormatError(f"label vector must be 1-d, got {labels.ndim}-d")
    if class_count < 1 or class_count > 0xFFFF:
        raise FormatError(f"class count {class_count} outside u16 range")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise FormatError(
            f"label values must lie in [0, {class_count}), "
            f"found range [{labels.min()}, {labels.max()}]"
        )
    head = LABEL_MAGIC + struct.pack(
        "<HQI", FORMAT_VERSION, labels.size, class_count
    )
    return head + np.ascontiguousarray(labels, dtype="<u2").tobytes()


def label_file_from_bytes(blob: bytes) -> Tuple[np.ndarray, int]:
    cur = _Cursor(blob, "label file")
    _check_header(cur, LABEL_MAGIC)
    rows, class_count = cur.unpack("QI")
    labels = cur.array(np.dtype("<u2"), rows)
    cur.done()
    if labels.size and labels.max() >= class_count:
        raise FormatError(
            f"label file: index {labels.max()} >= class count {class_count}"
        )
    return labels.astype(np.int64), class_count


def model_file_to_bytes(
    weights: np.ndarray,
    params_digest: str,
    stats: Optional[Standardization] = None,
) -> bytes:
    if weights.ndim != 2:
        raise FormatError(f"weight matrix must be 2-d, got {weights.ndim}-d")
    classes, dim = weights.shape
    digest = params_digest.encode("ascii")
    if len(digest) > 255:
        raise FormatError("params digest longer than 255 bytes")
    head = MODEL_MAGIC + struct.pack(
        "<HIIB", FORMAT_VERSION, classes, dim, len(digest)
    )
    return (
        head
        + digest
        + _stats_bytes(stats, dim)
        + np.ascontiguousarray(weights, dtype="<f8").tobytes()
    )


def model_file_from_bytes(
    blob: bytes,
) -> Tuple[np.ndarray, str, Optional[Standardization]]:
    cur = _Cursor(blob, "model file")
    _check_header(cur, MODEL_MAGIC)
    classes, dim, digest_len = cur.unpack("IIB")
    digest = cur.take(digest_len).decode("ascii")
    stats = _stats_block(cur, dim)
    weights = cur.array(np.dtype("<f8"), classes * dim)
    cur.done()
    return weights.reshape(classes, dim), digest, stats


def save_features(
    path,
    features: np.ndarray,
    stats: Optional[Standardization] = None,
    dtype: str = "f32",
) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_file_to_bytes(features, stats, dtype))


def load_features(path) -> Tuple[np.ndarray, Optional[Standardization]]:
    with open(path, "rb") as fh:
        return feature_file_from_bytes(fh.read())


def save_labels(path, labels: np.ndarray, class_count: int) -> None:
    with open(path, "wb") as fh:
        fh.write(label_file_to_bytes(labels, class_count))


def load_labels(path) -> Tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return label_file_from_bytes(fh.read())


def save_model(
    path,
    weights: np.ndarray,
    params_digest: str,
    stats: Optional[Standardization] = None,
) -> None:
    with open(path, "wb") as fh:
        fh.write(model_file_to_bytes(weights, params_digest, stats))


def load_model(path) -> Tuple[np.ndarray, str, Optional[Standardization]]:
    with open(path, "rb") as fh:
        return model_file_from_bytes(fh.read())
