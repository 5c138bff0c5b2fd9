"""Key generation: ternary secret, encryption pair, switching keys.

Switching keys hold one digit per chain prime; each digit is an encryption
of gadget_i * w under the secret, sampled across every modulus including the
special prime, and stored in Montgomery form so the hot loop pays a single
reduction per product.  The same keys serve every level because each digit
already vanishes modulo the primes it does not own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import SchemeParams
from .context import CkksContext, get_context
from . import backend


@dataclass(frozen=True)
class SecretKey:
    signs: np.ndarray       # int8 ternary coefficients, shape (N,)
    ntt_rows: np.ndarray    # uint64 (moduli, N), NTT form, special prime last
    params_digest: bytes


@dataclass(frozen=True)
class PublicKey:
    b: np.ndarray           # uint64 (chain, N), NTT + Montgomery form
    a: np.ndarray
    params_digest: bytes


@dataclass(frozen=True)
class SwitchKey:
    b: np.ndarray           # uint64 (digits, moduli, N), NTT + Montgomery
    a: np.ndarray


@dataclass(frozen=True)
class EvalKeySet:
    relin: SwitchKey
    rotations: dict[int, SwitchKey] = field(default_factory=dict)
    params_digest: bytes = b""

    @property
    def rotation_steps(self) -> tuple[int, ...]:
        return tuple(sorted(self.rotations))


@dataclass(frozen=True)
class KeyBundle:
    secret: SecretKey
    public: PublicKey
    evaluation: EvalKeySet


def _gauss_coeffs(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    return np.rint(rng.normal(0.0, sigma, n)).astype(np.int64)


def _uniform_rows(rng: np.random.Generator, ctx: CkksContext,
                  rows: int) -> np.ndarray:
    out = np.empty((rows, ctx.n), dtype=np.uint64)
    for r in range(rows):
        out[r] = rng.integers(0, ctx.moduli[r], ctx.n, dtype=np.uint64)
    return out


def _noise_rows(rng: np.random.Generator, ctx: CkksContext, rows: int,
                sigma: float) -> np.ndarray:
    e = _gauss_coeffs(rng, ctx.n, sigma)
    limbs = ctx.coeffs_to_limbs(e, rows)
    ctx.ntt(limbs)
    return limbs


def _make_switch_key(ctx: CkksContext, rng: np.random.Generator,
                     w_ntt: np.ndarray, s_ntt: np.ndarray,
                     sigma: float) -> SwitchKey:
    """Encrypt gadget_i * w digit by digit under s, all moduli."""
    nl = len(ctx.params.modulus_chain)
    m_count = len(ctx.moduli)
    n = ctx.n
    kb = np.empty((nl, m_count, n), dtype=np.uint64)
    ka = np.empty((nl, m_count, n), dtype=np.uint64)
    qs, qinvs, r2s = ctx.qs, ctx.qinvs, ctx.r2s
    for i in range(nl):
        a_i = _uniform_rows(rng, ctx, m_count)
        e_i = _noise_rows(rng, ctx, m_count, sigma)
        b_i = backend.vec_sub(e_i, backend.vec_mul(a_i, s_ntt, qs, qinvs, r2s), qs)
        gw = backend.scalar_mul(w_ntt, ctx.gadget_mont[i], qs, qinvs)
        b_i = backend.vec_add(b_i, gw, qs)
        backend.to_mont_rows(b_i, qs, qinvs, r2s)
        backend.to_mont_rows(a_i, qs, qinvs, r2s)
        kb[i] = b_i
        ka[i] = a_i
    return SwitchKey(kb, ka)


def default_rotation_steps(params: SchemeParams) -> tuple[int, ...]:
    """Signed powers of two covering every slot distance."""
    slots = params.ring_degree // 2
    steps: list[int] = []
    p = 1
    while p < slots:
        steps.append(p)
        steps.append(-p)
        p <<= 1
    return tuple(steps)


def keygen(params: SchemeParams, seed: int,
           rotation_steps: tuple[int, ...] | None = None) -> KeyBundle:
    """Deterministic key generation from an integer seed."""
    ctx = get_context(params)
    rng = np.random.Generator(np.random.PCG64(seed))
    sigma = params.error_stddev
    nl = len(params.modulus_chain)
    m_count = len(ctx.moduli)

    signs = rng.integers(-1, 2, ctx.n, dtype=np.int64)
    s_ntt = ctx.coeffs_to_limbs(signs, m_count)
    ctx.ntt(s_ntt)
    secret = SecretKey(signs.astype(np.int8), s_ntt, ctx.digest)

    qs_d, qinvs_d, r2s_d = ctx.qs[:nl], ctx.qinvs[:nl], ctx.r2s[:nl]
    pk_a = _uniform_rows(rng, ctx, nl)
    pk_e = _noise_rows(rng, ctx, nl, sigma)
    pk_b = backend.vec_sub(
        pk_e, backend.vec_mul(pk_a, s_ntt[:nl], qs_d, qinvs_d, r2s_d), qs_d)
    backend.to_mont_rows(pk_b, qs_d, qinvs_d, r2s_d)
    backend.to_mont_rows(pk_a, qs_d, qinvs_d, r2s_d)
    public = PublicKey(pk_b, pk_a, ctx.digest)

    s_sq = backend.vec_mul(s_ntt, s_ntt, ctx.qs, ctx.qinvs, ctx.r2s)
    relin = _make_switch_key(ctx, rng, s_sq, s_ntt, sigma)

    if rotation_steps is None:
        rotation_steps = default_rotation_steps(params)
    rotations: dict[int, SwitchKey] = {}
    for step in rotation_steps:
        g = ctx.galois_for_step(step)
        idx, flip = ctx.automorph_maps(g)
        # same scatter convention as backend.automorph_rows: out[idx[j]] = +-in[j]
        rs = np.zeros(ctx.n, dtype=np.int64)
        rs[idx] = np.where(flip != 0, -signs, signs)
        w = ctx.coeffs_to_limbs(rs, m_count)
        ctx.ntt(w)
        rotations[step] = _make_switch_key(ctx, rng, w, s_ntt, sigma)

    evaluation = EvalKeySet(relin, rotations, ctx.digest)
    return KeyBundle(secret, public, evaluation)
