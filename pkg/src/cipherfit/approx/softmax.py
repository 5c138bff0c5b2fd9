"""Row-wise softmax from squarings and a self-correcting reciprocal.

The exponential uses the compound-growth identity: exp(x) is approximated
by (1 + x/2^r)^(2^r), an affine step followed by r squarings.  The row-sum
reciprocal iterates y <- y(2 - d*y), which doubles correct bits per round
once seeded from the midpoint of the denominator range.  Iteration counts
come from the worst-case contraction rate, so callers state the logit
bound they guarantee and the absolute error they want.

Every multiplicative mask keeps padding lanes and padding rows at zero;
rows beyond `valid_rows` get their denominator pinned to one so the
reciprocal stays bounded there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import ckks
from ..ckks import SchemeParams, Ciphertext
from ..ckks.keys import EvalKeySet
from ..errors import DepthExhaustedError, ParameterError
from ..linalg import EncMatrix
from ..linalg.layout import mask_factory
from ..linalg.matmul import segment_lane_sum, segment_broadcast

RefreshFn = Callable[[Ciphertext], Ciphertext]


@dataclass(frozen=True)
class SoftmaxConfig:
    """Approximation budget for one softmax evaluation.

    exp_rounds      squarings in the exponential (depth exp_rounds + 1)
    inv_rounds      reciprocal iterations (depth 2 * inv_rounds)
    logit_bound     guaranteed |logit| ceiling the budget was sized for
    den_low/den_high  denominator range the reciprocal seed covers
    """

    exp_rounds: int
    inv_rounds: int
    logit_bound: float
    den_low: float
    den_high: float

    @classmethod
    def for_bound(cls, classes: int, logit_bound: float,
                  target_abs_err: float = 0.01) -> "SoftmaxConfig":
        if classes < 1 or logit_bound <= 0 or target_abs_err <= 0:
            raise ParameterError("softmax budget needs positive inputs")
        eps_exp = 0.4 * target_abs_err
        eps_inv = 0.4 * target_abs_err
        r = max(1, math.ceil(math.log2(logit_bound ** 2 / eps_exp)) - 2)
        # contraction |1 - d*y0| <= 1 - 2*lb/(lb+ub); squared each round
        ratio = math.exp(2 * logit_bound)
        it = max(1, math.ceil(math.log2(math.log(1 / eps_inv) * ratio / 2)))
        return cls(r, it, logit_bound,
                   classes * math.exp(-logit_bound),
                   classes * math.exp(logit_bound))

    @property
    def recip_seed(self) -> float:
        return 2.0 / (self.den_low + self.den_high)

    @property
    def depth(self) -> int:
        """Multiplicative levels one evaluation consumes end to end."""
        return self.exp_rounds + 1 + 1 + 2 * self.inv_rounds + 1


def _with_depth(params: SchemeParams, ct: Ciphertext, needed: int, op: str,
                refresh: RefreshFn | None) -> Ciphertext:
    if ct.level < needed and refresh is not None:
        ct = refresh(ct)
    if ct.level < needed:
        raise DepthExhaustedError(op, needed, ct.level)
    return ct


def aexp(params: SchemeParams, evk: EvalKeySet, logits: EncMatrix,
         cfg: SoftmaxConfig, valid_rows: int | None = None,
         refresh: RefreshFn | None = None) -> EncMatrix:
    """Entrywise exp over the valid region; padding slots come out zero."""
    masks = mask_factory(params, logits.layout)
    if valid_rows is None:
        valid_rows = logits.rows
    r = cfg.exp_rounds
    out = []
    for t, ct in enumerate(logits.cts):
        rows_here = min(logits.layout.seg_per_ct,
                        max(0, valid_rows - t * logits.layout.seg_per_ct))
        ct = _with_depth(params, ct, 1, "aexp", refresh)
        scaled = ckks.mult_plain(
            params, ct,
            masks.matrix_region(rows_here, logits.cols, 2.0 ** -r, ct.level))
        base = ckks.add_plain(
            params, scaled,
            masks.matrix_region(rows_here, logits.cols, 1.0, scaled.level,
                                scale=scaled.scale))
        for _ in range(r):
            base = _with_depth(params, base, 1, "aexp", refresh)
            base = ckks.square(params, evk, base)
        out.append(base)
    return logits.replace_cts(out)


def ainv_ciphertext(params: SchemeParams, evk: EvalKeySet, den: Ciphertext,
                    cfg: SoftmaxConfig, layout=None,
                    refresh: RefreshFn | None = None) -> Ciphertext:
    """Reciprocal of every slot of `den`, assumed inside the configured range."""
    masks = mask_factory(params, layout) if layout is not None else None

    def const_everywhere(value: float, level: int, scale: float | None):
        vec = np.full(params.slot_count, value)
        return ckks.encode(params, vec,
                           scale=scale if scale is not None else
                           float(params.modulus_chain[level]),
                           level=level)

    y = None
    for _ in range(cfg.inv_rounds):
        den = _with_depth(params, den, 2, "ainv", refresh)
        if y is None:
            # first round folds the constant seed in: y1 = y0*(2 - d*y0)
            t = ckks.mult_plain(
                params, den,
                const_everywhere(cfg.recip_seed, den.level, None))
            u = ckks.add_plain(params, ckks.negate(params, t),
                               const_everywhere(2.0, t.level, t.scale))
            y = ckks.mult_plain(
                params, u,
                const_everywhere(cfg.recip_seed, u.level, None))
            continue
        y = _with_depth(params, y, 2, "ainv", refresh)
        t = ckks.mult(params, evk, den, y)
        u = ckks.add_plain(params, ckks.negate(params, t),
                           const_everywhere(2.0, t.level, t.scale))
        y = ckks.mult(params, evk, y, u)
    if y is None:
        raise ParameterError("reciprocal needs at least one iteration")
    return y


def asoftmax(params: SchemeParams, evk: EvalKeySet, logits: EncMatrix,
             cfg: SoftmaxConfig, valid_rows: int | None = None,
             refresh: RefreshFn | None = None) -> EncMatrix:
    """Softmax across each row's `cols` lanes.

    Rows past `valid_rows` produce exact zeros (their exponentials are
    masked to zero and their denominators pinned to one).
    """
    if valid_rows is None:
        valid_rows = logits.rows
    layout = logits.layout
    masks = mask_factory(params, layout)
    exp = aexp(params, evk, logits, cfg, valid_rows, refresh)

    out = []
    for t, ect in enumerate(exp.cts):
        rows_here = min(layout.seg_per_ct,
                        max(0, valid_rows - t * layout.seg_per_ct))
        summed = segment_lane_sum(params, evk, ect, layout)
        summed = _with_depth(params, summed, 1, "asoftmax", refresh)
        heads = ckks.mult_plain(params, summed,
                                masks.heads(summed.level))
        # padding-row heads get denominator 1 so the reciprocal stays tame
        pin = np.zeros(params.slot_count)
        for s in range(rows_here, layout.seg_per_ct):
            pin[s * layout.seg_width] = 1.0
        if pin.any():
            heads = ckks.add_plain(
                params, heads,
                ckks.encode(params, pin, scale=heads.scale, level=heads.level))
        den = segment_broadcast(params, evk, heads, layout)
        inv = ainv_ciphertext(params, evk, den, cfg, layout, refresh)
        ect = _with_depth(params, ect, 1, "asoftmax", refresh)
        inv = _with_depth(params, inv, 1, "asoftmax", refresh)
        out.append(ckks.mult(params, evk, ect, inv))
    return exp.replace_cts(out)
