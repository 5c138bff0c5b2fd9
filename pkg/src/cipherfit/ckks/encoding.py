"""Slot encoding between real vectors and scaled integer ring elements.

A real vector of length <= N/2 is placed on the canonical-embedding slots
whose root exponents run through powers of 5 mod 2N, conjugates filled in
implicitly, then inverse-transformed and rounded at the requested scale.
Decoding inverts the pipeline and returns the real parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, ParameterError
from .params import SchemeParams
from .context import get_context

_MAX_COEFF = float(1 << 62)


@dataclass(frozen=True)
class Plaintext:
    """RNS residue rows (NTT form), one row per modulus up to `level`."""

    data: np.ndarray  # uint64, shape (level + 1, N)
    level: int
    scale: float
    params_digest: bytes

    @property
    def limb_count(self) -> int:
        return self.data.shape[0]


def encode(params: SchemeParams, values, scale: float | None = None,
           level: int | None = None) -> Plaintext:
    ctx = get_context(params)
    if scale is None:
        scale = params.default_scale
    if level is None:
        level = params.max_level
    if not 0 <= level <= params.max_level:
        raise ParameterError(f"level {level} outside [0, {params.max_level}]")

    vec = np.asarray(values, dtype=np.float64).ravel()
    if vec.size > ctx.slots:
        raise CapacityError(f"{vec.size} values exceed {ctx.slots} slots")

    spread = np.zeros(ctx.two_n, dtype=np.complex128)
    spread[ctx.rot_group[:vec.size]] = vec
    # real payload: conjugate slots mirror automatically through Re() below
    coeffs = 4.0 * np.fft.ifft(spread).real[:ctx.n]
    scaled = coeffs * scale
    peak = float(np.max(np.abs(scaled))) if scaled.size else 0.0
    if peak >= _MAX_COEFF:
        raise ParameterError(
            f"encoded coefficient magnitude {peak:.3e} too large for 62-bit headroom")
    ints = np.rint(scaled).astype(np.int64)

    limbs = ctx.coeffs_to_limbs(ints, level + 1)
    ctx.ntt(limbs)
    return Plaintext(limbs, level, float(scale), ctx.digest)


def _to_signed_ints(ctx, data: np.ndarray, level: int) -> np.ndarray:
    """CRT-combine up to two residue rows into signed integer coefficients.

    Returns an object-dtype array so >63-bit reconstructions survive.
    """
    rows = data.copy()
    ctx.intt(rows)
    q0 = ctx.q0_int
    a0 = rows[0].astype(object)
    if level == 0:
        return np.where(a0 > q0 // 2, a0 - q0, a0)
    q1 = ctx.q1_int
    a1 = rows[1].astype(object)
    diff = (a1 - (a0 % q1)) % q1
    s = (diff * ctx.q0_inv_mod_q1) % q1
    s = np.where(s > q1 // 2, s - q1, s)
    x = a0 + q0 * s
    # recentre the two-limb value; payloads stay far below q0*q1/2
    return x


def decode(params: SchemeParams, pt: Plaintext,
           count: int | None = None) -> np.ndarray:
    ctx = get_context(params)
    if pt.params_digest != ctx.digest:
        raise ParameterError("plaintext belongs to a different parameter set")
    ints = _to_signed_ints(ctx, pt.data, pt.level)
    coeffs = (ints / pt.scale).astype(np.float64)

    spread = np.zeros(ctx.two_n, dtype=np.complex128)
    spread[:ctx.n] = coeffs
    slots = (ctx.two_n * np.fft.ifft(spread))[ctx.rot_group]
    out = slots.real
    if count is not None:
        out = out[:count]
    return out
