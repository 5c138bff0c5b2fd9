"""Encrypted matrix products via rotate-and-fold over the tiled layout.

Both products cost three multiplicative levels end to end: one mask on the
operand being redistributed, the ciphertext product, and one mask that
clears fold spillover.  All rotations decompose into the signed
power-of-two steps the standard key set carries, plus the small direct
steps the layout requests.

Fold hygiene: doubling folds are sized by the populated region, never the
full tile — over-covering into zero-filled territory is harmless because
pack() zero-pads, but under-covering a populated segment or lane would
silently drop data, so every sized fold rounds its target up to the next
power of two.  Summing folds leave valid data only at segment heads (or in
segment zero); broadcasting folds start from a masked single location and
therefore never smear into neighbours.  Every spill lane is cleared by the
mask that follows.
"""

from __future__ import annotations

from .. import ckks
from ..ckks import SchemeParams, Ciphertext
from ..ckks.keys import EvalKeySet
from ..errors import DepthExhaustedError, DimensionError, LayoutError
from .layout import TileLayout, mask_factory
from .matrix import EncMatrix


def _fold_steps(populated: int) -> int:
    """Doubling folds needed to cover `populated` contiguous positions."""
    if populated < 1:
        raise DimensionError(f"fold target must be >= 1, got {populated}")
    return (populated - 1).bit_length()


def segment_lane_sum(params: SchemeParams, evk: EvalKeySet, ct: Ciphertext,
                     layout: TileLayout, width: int | None = None) -> Ciphertext:
    """Fold lanes so each segment head holds the sum of its first `width`
    lanes (whole segment when None; later lanes must be zero, no level)."""
    steps = _fold_steps(layout.seg_width if width is None else width)
    sh = 1
    for _ in range(steps):
        ct = ckks.add(params, ct, ckks.rotate(params, evk, ct, sh))
        sh <<= 1
    return ct


def segment_broadcast(params: SchemeParams, evk: EvalKeySet, ct: Ciphertext,
                      layout: TileLayout, width: int | None = None) -> Ciphertext:
    """Spread masked segment heads across their first `width` lanes
    (whole segment when None; no level)."""
    steps = _fold_steps(layout.seg_width if width is None else width)
    sh = 1
    for _ in range(steps):
        ct = ckks.add(params, ct, ckks.rotate(params, evk, ct, -sh))
        sh <<= 1
    return ct


def block_sum(params: SchemeParams, evk: EvalKeySet, ct: Ciphertext,
              layout: TileLayout, segments: int | None = None) -> Ciphertext:
    """Fold so segment 0 holds the per-lane sum over the first `segments`
    segments (all of them when None; later segments must be zero)."""
    steps = _fold_steps(layout.seg_per_ct if segments is None else segments)
    sh = layout.seg_width
    for _ in range(steps):
        ct = ckks.add(params, ct, ckks.rotate(params, evk, ct, sh))
        sh <<= 1
    return ct


def block_broadcast(params: SchemeParams, evk: EvalKeySet, ct: Ciphertext,
                    layout: TileLayout, steps: int | None = None) -> Ciphertext:
    """Copy one populated segment onto the `2**steps - 1` segments after it
    (cyclically; every segment when None)."""
    if steps is None:
        steps = _fold_steps(layout.seg_per_ct)
    sh = layout.seg_width
    for _ in range(steps):
        ct = ckks.add(params, ct, ckks.rotate(params, evk, ct, -sh))
        sh <<= 1
    return ct


def matmul_abt(params: SchemeParams, evk: EvalKeySet,
               a: EncMatrix, b: EncMatrix) -> EncMatrix:
    """A @ B.T for row-packed A (n x d) and B (m x d); result is n x m.

    Costs three levels: min(level_A - 2, level_B - 3) remains.
    """
    if a.layout != b.layout:
        raise LayoutError("matmul_abt: operands use different layouts")
    if a.cols != b.cols:
        raise DimensionError(
            f"matmul_abt: inner dimension {a.cols} vs {b.cols}")
    if b.rows > a.layout.seg_width:
        raise DimensionError(
            f"matmul_abt: {b.rows} result columns exceed segment width")
    out_level = min(a.level - 2, b.level - 3)
    if out_level < 0:
        raise DepthExhaustedError("matmul_abt", 3, min(a.level, b.level))

    layout = a.layout
    spc = layout.seg_per_ct
    masks = mask_factory(params, layout)
    populated = min(a.rows, spc)  # segments the broadcast must reach
    homed = _fold_steps(populated)
    acc: list[Ciphertext | None] = [None] * layout.ct_count(a.rows)
    for j in range(b.rows):
        tj, sj = divmod(j, spc)
        x = ckks.mult_plain(params, b.cts[tj],
                            masks.segment(sj, b.cts[tj].level))
        # A copy of row j must land on segments 0..populated-1.  Either
        # re-home the isolated segment to 0 first (one rotation) or fold far
        # enough that the cyclic coverage wraps around to segment 0.
        wrapped = homed if sj == 0 else _fold_steps(min(spc, spc - sj + populated))
        if sj and 1 + homed < wrapped:
            x = ckks.rotate(params, evk, x, sj * layout.seg_width)
            steps = homed
        else:
            steps = wrapped
        x = block_broadcast(params, evk, x, layout, steps)
        for t in range(len(acc)):
            p = ckks.mult(params, evk, a.cts[t], x)
            p = segment_lane_sum(params, evk, p, layout, a.cols)
            p = ckks.mult_plain(params, p, masks.heads(p.level))
            if j:
                p = ckks.rotate(params, evk, p, -j)
            acc[t] = p if acc[t] is None else ckks.add(params, acc[t], p)
    return EncMatrix(tuple(acc), a.rows, b.rows, layout)


def matmul_atb(params: SchemeParams, evk: EvalKeySet,
               s: EncMatrix, a: EncMatrix) -> EncMatrix:
    """S.T @ A for row-packed S (n x k) and A (n x d); result is k x d.

    Costs three levels: min(level_A - 2, level_S - 3) remains.
    """
    if s.layout != a.layout:
        raise LayoutError("matmul_atb: operands use different layouts")
    if s.rows != a.rows:
        raise DimensionError(f"matmul_atb: row counts {s.rows} vs {a.rows}")
    if s.cols > s.layout.seg_width:
        raise DimensionError(
            f"matmul_atb: {s.cols} result rows exceed segment width")
    out_level = min(a.level - 2, s.level - 3)
    if out_level < 0:
        raise DepthExhaustedError("matmul_atb", 3, min(a.level, s.level))

    layout = a.layout
    masks = mask_factory(params, layout)
    populated = min(s.rows, layout.seg_per_ct)  # segments carrying data
    acc: list[Ciphertext | None] = [None] * layout.ct_count(s.cols)
    for j in range(s.cols):
        parts = []
        for t in range(len(a.cts)):
            x = ckks.mult_plain(params, s.cts[t],
                                masks.lane(j, s.cts[t].level))
            if j:
                x = ckks.rotate(params, evk, x, j)
            x = segment_broadcast(params, evk, x, layout, a.cols)
            parts.append(ckks.mult(params, evk, a.cts[t], x))
        q = parts[0]
        for extra in parts[1:]:
            q = ckks.add(params, q, extra)
        q = block_sum(params, evk, q, layout, populated)
        q = ckks.mult_plain(params, q, masks.first_segment(a.cols, q.level))
        tj, sj = divmod(j, layout.seg_per_ct)
        if sj:
            q = ckks.rotate(params, evk, q, -sj * layout.seg_width)
        acc[tj] = q if acc[tj] is None else ckks.add(params, acc[tj], q)
    return EncMatrix(tuple(acc), s.cols, a.cols, layout)
