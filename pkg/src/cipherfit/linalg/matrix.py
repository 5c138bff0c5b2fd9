"""Encrypted matrices: packing, transport, and entrywise arithmetic."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .. import ckks
from ..ckks import SchemeParams, Plaintext, Ciphertext, serial
from ..ckks.keys import PublicKey, SecretKey
from ..errors import DimensionError, LayoutError
from .layout import TileLayout, mask_factory


@dataclass(frozen=True)
class EncMatrix:
    cts: tuple[Ciphertext, ...]
    rows: int
    cols: int
    layout: TileLayout

    @property
    def level(self) -> int:
        return self.cts[0].level

    @property
    def scale(self) -> float:
        return self.cts[0].scale

    def replace_cts(self, cts) -> "EncMatrix":
        return EncMatrix(tuple(cts), self.rows, self.cols, self.layout)


def _check_same_shape(a: EncMatrix, b: EncMatrix, op: str) -> None:
    if a.layout != b.layout:
        raise LayoutError(f"{op}: operands use different layouts")
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise DimensionError(
            f"{op}: shape ({a.rows}, {a.cols}) vs ({b.rows}, {b.cols})")


def pack_matrix(params: SchemeParams, mat: np.ndarray, layout: TileLayout,
                level: int | None = None,
                scale: float | None = None) -> list[Plaintext]:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    rows, cols = mat.shape
    if cols > layout.seg_width:
        raise LayoutError(f"{cols} columns exceed segment width {layout.seg_width}")
    pts = []
    for t in range(layout.ct_count(rows)):
        vec = np.zeros(layout.slots)
        for s in range(layout.seg_per_ct):
            r = t * layout.seg_per_ct + s
            if r >= rows:
                break
            vec[s * layout.seg_width:s * layout.seg_width + cols] = mat[r]
        pts.append(ckks.encode(params, vec, scale=scale, level=level))
    return pts


def unpack_matrix(params: SchemeParams, pts, rows: int, cols: int,
                  layout: TileLayout) -> np.ndarray:
    out = np.zeros((rows, cols))
    for t, pt in enumerate(pts):
        vec = ckks.decode(params, pt)
        for s in range(layout.seg_per_ct):
            r = t * layout.seg_per_ct + s
            if r >= rows:
                break
            out[r] = vec[s * layout.seg_width:s * layout.seg_width + cols]
    return out


def encrypt_matrix(params: SchemeParams, pk: PublicKey, mat: np.ndarray,
                   layout: TileLayout, level: int | None = None,
                   scale: float | None = None,
                   rng: np.random.Generator | int | None = None) -> EncMatrix:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pts = pack_matrix(params, mat, layout, level, scale)
    cts = tuple(ckks.encrypt(params, pk, pt, rng=rng) for pt in pts)
    return EncMatrix(cts, mat.shape[0], mat.shape[1], layout)


def decrypt_matrix(params: SchemeParams, sk: SecretKey,
                   em: EncMatrix) -> np.ndarray:
    pts = [ckks.decrypt(params, sk, ct) for ct in em.cts]
    return unpack_matrix(params, pts, em.rows, em.cols, em.layout)


def mat_add(params: SchemeParams, a: EncMatrix, b: EncMatrix) -> EncMatrix:
    _check_same_shape(a, b, "mat_add")
    return a.replace_cts(ckks.add(params, x, y) for x, y in zip(a.cts, b.cts))


def mat_sub(params: SchemeParams, a: EncMatrix, b: EncMatrix) -> EncMatrix:
    _check_same_shape(a, b, "mat_sub")
    return a.replace_cts(ckks.sub(params, x, y) for x, y in zip(a.cts, b.cts))


def mat_scale(params: SchemeParams, a: EncMatrix, c: float) -> EncMatrix:
    """Multiply every entry by a plain constant; costs one level."""
    masks = mask_factory(params, a.layout)
    pt = masks.matrix_region(a.rows, a.cols, c, a.level)
    return a.replace_cts(ckks.mult_plain(params, ct, pt) for ct in a.cts)


def mat_add_plain(params: SchemeParams, a: EncMatrix,
                  mat: np.ndarray) -> EncMatrix:
    """Add a plaintext matrix of the same shape (no level cost)."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    if mat.shape != (a.rows, a.cols):
        raise DimensionError(
            f"mat_add_plain: shape {mat.shape} vs ({a.rows}, {a.cols})")
    pts = pack_matrix(params, mat, a.layout, level=a.level, scale=a.scale)
    return a.replace_cts(
        ckks.add_plain(params, ct, pt) for ct, pt in zip(a.cts, pts))


def enc_matrix_to_bytes(params: SchemeParams, em: EncMatrix) -> bytes:
    buf = serial._header(params, serial.KIND_ENC_MATRIX)
    buf += struct.pack("<IIII", em.rows, em.cols,
                       em.layout.seg_width, len(em.cts))
    for ct in em.cts:
        serial.ciphertext_body(buf, ct)
    return bytes(buf)


def enc_matrix_from_bytes(params: SchemeParams, data: bytes) -> EncMatrix:
    _, rd = serial.open_container(params, data, serial.KIND_ENC_MATRIX)
    rows, cols, seg_width, count = struct.unpack("<IIII", rd.take(16))
    slots = params.slot_count
    if seg_width < 1 or seg_width > slots or slots % seg_width:
        raise serial.FormatError(f"bad segment width {seg_width}")
    layout = TileLayout(slots, seg_width, slots // seg_width)
    if count != layout.ct_count(rows):
        raise serial.FormatError(
            f"{count} ciphertexts inconsistent with {rows} rows")
    cts = tuple(serial.ciphertext_from_reader(params, rd) for _ in range(count))
    rd.done()
    return EncMatrix(cts, rows, cols, layout)
