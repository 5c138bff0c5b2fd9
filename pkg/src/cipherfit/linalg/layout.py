"""Tiled slot layout for matrices and the plaintext masks that carve it.

A matrix row occupies one power-of-two-wide segment of a ciphertext's slot
vector; `seg_per_ct` rows share a ciphertext.  Every matrix in a session
uses one layout (segment width sized for the largest dimension in play), so
products never need a repacking step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ckks import SchemeParams, encode, Plaintext
from ..errors import LayoutError


def _next_pow2(x: int) -> int:
    return 1 << max(x - 1, 0).bit_length()


@dataclass(frozen=True)
class TileLayout:
    slots: int
    seg_width: int      # power of two, >= every matrix dimension in play
    seg_per_ct: int     # slots // seg_width

    @classmethod
    def for_dims(cls, params: SchemeParams, *dims: int) -> "TileLayout":
        if not dims or min(dims) < 1:
            raise LayoutError(f"dimensions must be positive, got {dims}")
        width = _next_pow2(max(dims))
        slots = params.slot_count
        if width > slots:
            raise LayoutError(
                f"dimension {max(dims)} needs segment width {width}, "
                f"but the ring offers only {slots} slots")
        return cls(slots, width, slots // width)

    def ct_count(self, rows: int) -> int:
        return max(1, -(-rows // self.seg_per_ct))

    def slot_of(self, row: int, col: int) -> tuple[int, int]:
        """(ciphertext index, slot index) of a matrix entry."""
        return row // self.seg_per_ct, (row % self.seg_per_ct) * self.seg_width + col

    def fits(self, rows: int, cols: int) -> bool:
        return cols <= self.seg_width and rows >= 1


class MaskFactory:
    """Caches the plaintext masks the matrix kernels multiply or add with.

    Multiplicative masks are encoded at scale q_level so the product keeps
    the ciphertext's scale after its rescale.
    """

    def __init__(self, params: SchemeParams, layout: TileLayout):
        self.params = params
        self.layout = layout
        self._cache: dict[tuple, Plaintext] = {}

    def _mask(self, key: tuple, vec: np.ndarray, level: int,
              scale: float | None) -> Plaintext:
        if scale is None:
            scale = float(self.params.modulus_chain[level])
        full_key = key + (level, scale)
        pt = self._cache.get(full_key)
        if pt is None:
            pt = encode(self.params, vec, scale=scale, level=level)
            self._cache[full_key] = pt
        return pt

    def segment(self, s: int, level: int, scale: float | None = None) -> Plaintext:
        """1 on every lane of segment s."""
        lo = self.layout
        vec = np.zeros(lo.slots)
        vec[s * lo.seg_width:(s + 1) * lo.seg_width] = 1.0
        return self._mask(("seg", s), vec, level, scale)

    def heads(self, level: int, scale: float | None = None) -> Plaintext:
        """1 on lane 0 of every segment."""
        lo = self.layout
        vec = np.zeros(lo.slots)
        vec[::lo.seg_width] = 1.0
        return self._mask(("heads",), vec, level, scale)

    def lane(self, j: int, level: int, scale: float | None = None) -> Plaintext:
        """1 on lane j of every segment (a matrix column)."""
        lo = self.layout
        vec = np.zeros(lo.slots)
        vec[j::lo.seg_width] = 1.0
        return self._mask(("lane", j), vec, level, scale)

    def first_segment(self, cols: int, level: int,
                      scale: float | None = None) -> Plaintext:
        """1 on lanes 0..cols-1 of segment 0 only."""
        vec = np.zeros(self.layout.slots)
        vec[:cols] = 1.0
        return self._mask(("first", cols), vec, level, scale)

    def matrix_region(self, rows: int, cols: int, value: float, level: int,
                      scale: float | None = None) -> Plaintext:
        """`value` on every valid (row, col) slot of one ciphertext's view.

        Rows beyond `rows` (capped at seg_per_ct) and lanes beyond `cols`
        stay zero, which is what keeps padding slots inert through affine
        steps.
        """
        lo = self.layout
        vec = np.zeros(lo.slots)
        r = min(rows, lo.seg_per_ct)
        for s in range(r):
            vec[s * lo.seg_width:s * lo.seg_width + cols] = value
        return self._mask(("region", rows, cols, value), vec, level, scale)

    def row_block(self, valid_rows: int, cols: int, level: int,
                  scale: float | None = None) -> Plaintext:
        """1 on the first `valid_rows` segments' first `cols` lanes."""
        return self.matrix_region(valid_rows, cols, 1.0, level, scale)


_FACTORIES: dict[tuple, MaskFactory] = {}


def mask_factory(params: SchemeParams, layout: TileLayout) -> MaskFactory:
    key = (params.digest(), layout.seg_width, layout.slots)
    f = _FACTORIES.get(key)
    if f is None:
        f = MaskFactory(params, layout)
        _FACTORIES[key] = f
    return f
