"""Encryption and the homomorphic operation set.

Ciphertexts carry their level (limb rows 0..level) and scale.  Binary ops
align operands by dropping limbs of the deeper-level side; scales must agree
to within a 2^-10 relative tolerance except across multiplies, which track
the product scale and rescale by the dropped prime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DepthExhaustedError, ParameterError
from .params import SchemeParams
from .context import get_context
from .encoding import Plaintext
from .keys import PublicKey, SecretKey, EvalKeySet, _gauss_coeffs
from . import backend

SCALE_REL_TOL = 2.0 ** -10


@dataclass(frozen=True)
class Ciphertext:
    c0: np.ndarray          # uint64 (level + 1, N), NTT form
    c1: np.ndarray
    level: int
    scale: float
    params_digest: bytes

    @property
    def limb_count(self) -> int:
        return self.c0.shape[0]


def ensure_levels(ct: Ciphertext, needed: int, op: str) -> None:
    if ct.level < needed:
        raise DepthExhaustedError(op, needed, ct.level)


def _require_same_params(digest: bytes, *objs) -> None:
    for o in objs:
        if o.params_digest != digest:
            raise ParameterError("objects belong to different parameter sets")


def _scales_match(s1: float, s2: float) -> bool:
    return abs(s1 - s2) <= SCALE_REL_TOL * max(s1, s2)


def _drop_to(ct: Ciphertext, level: int) -> Ciphertext:
    if level == ct.level:
        return ct
    if level > ct.level:
        raise ParameterError(f"cannot raise level {ct.level} to {level}")
    nd = level + 1
    return Ciphertext(np.ascontiguousarray(ct.c0[:nd]),
                      np.ascontiguousarray(ct.c1[:nd]),
                      level, ct.scale, ct.params_digest)


def _drop_plain_to(pt: Plaintext, level: int) -> Plaintext:
    if level == pt.level:
        return pt
    if level > pt.level:
        raise ParameterError(f"cannot raise level {pt.level} to {level}")
    return Plaintext(np.ascontiguousarray(pt.data[:level + 1]),
                     level, pt.scale, pt.params_digest)


def mod_switch_to(ct: Ciphertext, level: int) -> Ciphertext:
    """Drop limbs without rescaling; scale is unchanged."""
    return _drop_to(ct, level)


def _align(a: Ciphertext, b: Ciphertext) -> tuple[Ciphertext, Ciphertext]:
    lv = min(a.level, b.level)
    return _drop_to(a, lv), _drop_to(b, lv)


def encrypt(params: SchemeParams, pk: PublicKey, pt: Plaintext,
            rng: np.random.Generator | int | None = None) -> Ciphertext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, pk, pt)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    nd = pt.level + 1
    qs, qinvs, r2s = ctx.qs[:nd], ctx.qinvs[:nd], ctx.r2s[:nd]

    u = rng.integers(-1, 2, ctx.n, dtype=np.int64)
    u_ntt = ctx.coeffs_to_limbs(u, nd)
    ctx.ntt(u_ntt)
    e0 = ctx.coeffs_to_limbs(_gauss_coeffs(rng, ctx.n, params.error_stddev), nd)
    e1 = ctx.coeffs_to_limbs(_gauss_coeffs(rng, ctx.n, params.error_stddev), nd)
    ctx.ntt(e0)
    ctx.ntt(e1)

    c0 = backend.vec_mul_mont(u_ntt, pk.b[:nd], qs, qinvs)
    c0 = backend.vec_add(c0, e0, qs)
    c0 = backend.vec_add(c0, pt.data, qs)
    c1 = backend.vec_mul_mont(u_ntt, pk.a[:nd], qs, qinvs)
    c1 = backend.vec_add(c1, e1, qs)
    return Ciphertext(c0, c1, pt.level, pt.scale, ctx.digest)


def decrypt(params: SchemeParams, sk: SecretKey, ct: Ciphertext) -> Plaintext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, sk, ct)
    nd = ct.level + 1
    qs, qinvs, r2s = ctx.qs[:nd], ctx.qinvs[:nd], ctx.r2s[:nd]
    m = backend.vec_mul(ct.c1, sk.ntt_rows[:nd], qs, qinvs, r2s)
    m = backend.vec_add(m, ct.c0, qs)
    return Plaintext(m, ct.level, ct.scale, ctx.digest)


def add(params: SchemeParams, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, a, b)
    a, b = _align(a, b)
    if not _scales_match(a.scale, b.scale):
        raise ParameterError(f"scale mismatch in add: {a.scale} vs {b.scale}")
    nd = a.level + 1
    qs = ctx.qs[:nd]
    return Ciphertext(backend.vec_add(a.c0, b.c0, qs),
                      backend.vec_add(a.c1, b.c1, qs),
                      a.level, a.scale, ctx.digest)


def sub(params: SchemeParams, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, a, b)
    a, b = _align(a, b)
    if not _scales_match(a.scale, b.scale):
        raise ParameterError(f"scale mismatch in sub: {a.scale} vs {b.scale}")
    nd = a.level + 1
    qs = ctx.qs[:nd]
    return Ciphertext(backend.vec_sub(a.c0, b.c0, qs),
                      backend.vec_sub(a.c1, b.c1, qs),
                      a.level, a.scale, ctx.digest)


def negate(params: SchemeParams, a: Ciphertext) -> Ciphertext:
    ctx = get_context(params)
    nd = a.level + 1
    qs = ctx.qs[:nd]
    return Ciphertext(backend.vec_neg(a.c0, qs), backend.vec_neg(a.c1, qs),
                      a.level, a.scale, ctx.digest)


def add_plain(params: SchemeParams, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, ct, pt)
    lv = min(ct.level, pt.level)
    ct = _drop_to(ct, lv)
    pt = _drop_plain_to(pt, lv)
    if not _scales_match(ct.scale, pt.scale):
        raise ParameterError(
            f"scale mismatch in add_plain: {ct.scale} vs {pt.scale}")
    qs = ctx.qs[:lv + 1]
    return Ciphertext(backend.vec_add(ct.c0, pt.data, qs), ct.c1,
                      lv, ct.scale, ctx.digest)


def sub_plain(params: SchemeParams, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    ctx = get_context(params)
    _require_same_params(ctx.digest, ct, pt)
    lv = min(ct.level, pt.level)
    ct = _drop_to(ct, lv)
    pt = _drop_plain_to(pt, lv)
    if not _scales_match(ct.scale, pt.scale):
        raise ParameterError(
            f"scale mismatch in sub_plain: {ct.scale} vs {pt.scale}")
    qs = ctx.qs[:lv + 1]
    return Ciphertext(backend.vec_sub(ct.c0, pt.data, qs), ct.c1,
                      lv, ct.scale, ctx.digest)


def mult_plain(params: SchemeParams, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Plaintext product followed by one rescale (consumes one level)."""
    ctx = get_context(params)
    _require_same_params(ctx.digest, ct, pt)
    lv = min(ct.level, pt.level)
    ensure_levels(_drop_to(ct, lv), 1, "mult_plain")
    ct = _drop_to(ct, lv)
    pt = _drop_plain_to(pt, lv)
    nd = lv + 1
    qs, qinvs, r2s = ctx.qs[:nd], ctx.qinvs[:nd], ctx.r2s[:nd]
    c0 = backend.vec_mul(ct.c0, pt.data, qs, qinvs, r2s)
    c1 = backend.vec_mul(ct.c1, pt.data, qs, qinvs, r2s)
    inv_row = ctx.rescale_inv_row(lv)
    c0 = backend.rescale_rows(c0, ctx.qs, ctx.qinvs, ctx.halfq,
                              ctx.psis, ctx.ipsis, ctx.ninvs, inv_row)
    c1 = backend.rescale_rows(c1, ctx.qs, ctx.qinvs, ctx.halfq,
                              ctx.psis, ctx.ipsis, ctx.ninvs, inv_row)
    new_scale = ct.scale * pt.scale / params.modulus_chain[lv]
    return Ciphertext(c0, c1, lv - 1, new_scale, ctx.digest)


def mult(params: SchemeParams, evk: EvalKeySet,
         a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Ciphertext product: tensor, relinearize, rescale (one level)."""
    ctx = get_context(params)
    _require_same_params(ctx.digest, a, b, evk)
    a, b = _align(a, b)
    ensure_levels(a, 1, "mult")
    lv = a.level
    c0, c1 = backend.mult_relin_rescale(
        a.c0, a.c1, b.c0, b.c1, evk.relin.b, evk.relin.a,
        ctx.qs, ctx.qinvs, ctx.r2s, ctx.halfq,
        ctx.psis, ctx.ipsis, ctx.ninvs,
        ctx.pinv_mont, ctx.rescale_inv_row(lv))
    new_scale = a.scale * b.scale / params.modulus_chain[lv]
    return Ciphertext(c0, c1, lv - 1, new_scale, ctx.digest)


def square(params: SchemeParams, evk: EvalKeySet, a: Ciphertext) -> Ciphertext:
    return mult(params, evk, a, a)


def rescale(params: SchemeParams, ct: Ciphertext) -> Ciphertext:
    ctx = get_context(params)
    ensure_levels(ct, 1, "rescale")
    lv = ct.level
    inv_row = ctx.rescale_inv_row(lv)
    c0 = backend.rescale_rows(ct.c0, ctx.qs, ctx.qinvs, ctx.halfq,
                              ctx.psis, ctx.ipsis, ctx.ninvs, inv_row)
    c1 = backend.rescale_rows(ct.c1, ctx.qs, ctx.qinvs, ctx.halfq,
                              ctx.psis, ctx.ipsis, ctx.ninvs, inv_row)
    return Ciphertext(c0, c1, lv - 1, ct.scale / params.modulus_chain[lv],
                      ctx.digest)


def _decompose_rotation(step: int, slots: int,
                        available: dict) -> list[int]:
    step %= slots
    if step == 0:
        return []
    if step in available:
        return [step]
    if step - slots in available:
        return [step - slots]
    k = step if step <= slots // 2 else step - slots
    hops: list[int] = []
    mag, sign = abs(k), 1 if k > 0 else -1
    bit = 1
    while mag:
        if mag & 1:
            hops.append(sign * bit)
        mag >>= 1
        bit <<= 1
    return hops


def rotate(params: SchemeParams, evk: EvalKeySet, ct: Ciphertext,
           step: int) -> Ciphertext:
    """Cyclic left rotation of the slot vector by `step` (negative = right).

    Decomposes into signed power-of-two hops covered by the key set; levels
    and scale are unchanged.
    """
    from ..errors import KeyMissingError

    ctx = get_context(params)
    _require_same_params(ctx.digest, ct, evk)
    hops = _decompose_rotation(step, ctx.slots, evk.rotations)
    c0, c1 = ct.c0, ct.c1
    for hop in hops:
        key = evk.rotations.get(hop)
        if key is None:
            raise KeyMissingError(f"no rotation key for step {hop}")
        g = ctx.galois_for_step(hop)
        idx, flip = ctx.automorph_maps(g)
        c0, c1 = backend.rotate_core(
            c0, c1, idx, flip, key.b, key.a,
            ctx.qs, ctx.qinvs, ctx.r2s, ctx.halfq,
            ctx.psis, ctx.ipsis, ctx.ninvs, ctx.pinv_mont)
    return Ciphertext(c0, c1, ct.level, ct.scale, ctx.digest)
