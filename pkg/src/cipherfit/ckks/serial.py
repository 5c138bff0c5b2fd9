"""Binary container for keys, plaintexts and ciphertexts.

Layout (all little-endian):

    magic   4 bytes  b"BTHE"
    version u16
    digest  32 bytes (parameter-set digest; loads verify it)
    kind    u8
    body    kind-specific

Arrays are written as ndim:u8, dims:u64 each, dtype code:u8, raw bytes.
Anything malformed raises FormatError; a digest that does not match the
caller's parameter set raises DigestMismatchError.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DigestMismatchError, FormatError
from .params import SchemeParams
from .context import get_context
from .encoding import Plaintext
from .keys import SecretKey, PublicKey, SwitchKey, EvalKeySet
from .ops import Ciphertext

MAGIC = b"BTHE"
VERSION = 1

KIND_SECRET = 1
KIND_PUBLIC = 2
KIND_EVAL = 3
KIND_PLAINTEXT = 4
KIND_CIPHERTEXT = 5
KIND_ENC_MATRIX = 6

_DTYPE_CODES = {np.dtype(np.uint64): 1, np.dtype(np.int8): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated container: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


def write_array(buf: bytearray, arr: np.ndarray) -> None:
    code = _DTYPE_CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported array dtype {arr.dtype}")
    buf.append(arr.ndim)
    for d in arr.shape:
        buf += struct.pack("<Q", d)
    buf.append(code)
    buf += np.ascontiguousarray(arr).tobytes()


def read_array(rd: Reader) -> np.ndarray:
    ndim = rd.u8()
    if ndim > 4:
        raise FormatError(f"array rank {ndim} out of range")
    shape = tuple(rd.u64() for _ in range(ndim))
    size = 1
    for d in shape:
        if d > 1 << 32:
            raise FormatError(f"array dimension {d} out of range")
        size *= d
    code = rd.u8()
    dtype = _CODE_DTYPES.get(code)
    if dtype is None:
        raise FormatError(f"unknown dtype code {code}")
    raw = rd.take(size * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _header(params: SchemeParams, kind: int) -> bytearray:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", VERSION)
    buf += params.digest()
    buf.append(kind)
    return buf


def open_container(params: SchemeParams, data: bytes,
                   expect_kind: int | None = None) -> tuple[int, Reader]:
    rd = Reader(data)
    if rd.take(4) != MAGIC:
        raise FormatError("bad magic; not a key/ciphertext container")
    ver = rd.u16()
    if ver != VERSION:
        raise FormatError(f"unsupported container version {ver}")
    digest = rd.take(32)
    if digest != params.digest():
        raise DigestMismatchError(
            f"container built for parameter set {digest[:6].hex()}.., "
            f"current set is {params.digest()[:6].hex()}..")
    kind = rd.u8()
    if expect_kind is not None and kind != expect_kind:
        raise FormatError(f"expected container kind {expect_kind}, found {kind}")
    return kind, rd


def secret_key_to_bytes(params: SchemeParams, sk: SecretKey) -> bytes:
    buf = _header(params, KIND_SECRET)
    write_array(buf, sk.signs)
    write_array(buf, sk.ntt_rows)
    return bytes(buf)


def secret_key_from_bytes(params: SchemeParams, data: bytes) -> SecretKey:
    _, rd = open_container(params, data, KIND_SECRET)
    signs = read_array(rd)
    ntt_rows = read_array(rd)
    rd.done()
    return SecretKey(signs, ntt_rows, params.digest())


def public_key_to_bytes(params: SchemeParams, pk: PublicKey) -> bytes:
    buf = _header(params, KIND_PUBLIC)
    write_array(buf, pk.b)
    write_array(buf, pk.a)
    return bytes(buf)


def public_key_from_bytes(params: SchemeParams, data: bytes) -> PublicKey:
    _, rd = open_container(params, data, KIND_PUBLIC)
    b = read_array(rd)
    a = read_array(rd)
    rd.done()
    return PublicKey(b, a, params.digest())


def eval_keys_to_bytes(params: SchemeParams, evk: EvalKeySet) -> bytes:
    buf = _header(params, KIND_EVAL)
    write_array(buf, evk.relin.b)
    write_array(buf, evk.relin.a)
    buf += struct.pack("<I", len(evk.rotations))
    for step in sorted(evk.rotations):
        key = evk.rotations[step]
        buf += struct.pack("<i", step)
        write_array(buf, key.b)
        write_array(buf, key.a)
    return bytes(buf)


def eval_keys_from_bytes(params: SchemeParams, data: bytes) -> EvalKeySet:
    _, rd = open_container(params, data, KIND_EVAL)
    relin = SwitchKey(read_array(rd), read_array(rd))
    count = rd.u32()
    rotations = {}
    for _ in range(count):
        step = rd.i32()
        rotations[step] = SwitchKey(read_array(rd), read_array(rd))
    rd.done()
    return EvalKeySet(relin, rotations, params.digest())


def plaintext_to_bytes(params: SchemeParams, pt: Plaintext) -> bytes:
    buf = _header(params, KIND_PLAINTEXT)
    buf.append(pt.level)
    buf += struct.pack("<d", pt.scale)
    write_array(buf, pt.data)
    return bytes(buf)


def plaintext_from_bytes(params: SchemeParams, data: bytes) -> Plaintext:
    _, rd = open_container(params, data, KIND_PLAINTEXT)
    level = rd.u8()
    scale = rd.f64()
    arr = read_array(rd)
    rd.done()
    return Plaintext(arr, level, scale, params.digest())


def ciphertext_body(buf: bytearray, ct: Ciphertext) -> None:
    buf.append(ct.level)
    buf += struct.pack("<d", ct.scale)
    write_array(buf, ct.c0)
    write_array(buf, ct.c1)


def ciphertext_from_reader(params: SchemeParams, rd: Reader) -> Ciphertext:
    level = rd.u8()
    scale = rd.f64()
    c0 = read_array(rd)
    c1 = read_array(rd)
    if c0.shape != c1.shape or c0.ndim != 2 or c0.shape[0] != level + 1:
        raise FormatError("ciphertext limb shape inconsistent with level")
    return Ciphertext(c0, c1, level, scale, params.digest())


def ciphertext_to_bytes(params: SchemeParams, ct: Ciphertext) -> bytes:
    buf = _header(params, KIND_CIPHERTEXT)
    ciphertext_body(buf, ct)
    return bytes(buf)


def ciphertext_from_bytes(params: SchemeParams, data: bytes) -> Ciphertext:
    _, rd = open_container(params, data, KIND_CIPHERTEXT)
    ct = ciphertext_from_reader(params, rd)
    rd.done()
    return ct


def save(path, blob: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(blob)


def load(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()
