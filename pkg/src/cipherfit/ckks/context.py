"""Per-parameter-set precomputed tables, cached by params digest.

Stacking order everywhere: data primes q_0..q_L first, special prime last.
"""

from __future__ import annotations

import numpy as np

from .params import SchemeParams
from . import backend

_R64 = 1 << 64


def _bit_rev(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def _find_psi(q: int, two_n: int) -> int:
    """Primitive 2N-th root of unity mod q (psi^N = -1)."""
    exp = (q - 1) // two_n
    for g in range(2, 1000):
        psi = pow(g, exp, q)
        if psi != 1 and pow(psi, two_n // 2, q) == q - 1:
            return psi
    raise RuntimeError(f"no 2N-th root found mod {q}")


class CkksContext:
    """NTT tables, Montgomery constants, gadget rows and CRT helpers."""

    def __init__(self, params: SchemeParams):
        self.params = params
        n = params.ring_degree
        self.n = n
        self.slots = n // 2
        self.two_n = 2 * n
        self.logn = n.bit_length() - 1
        self.digest = params.digest()

        moduli = [*params.modulus_chain, params.special_prime]
        m_count = len(moduli)
        self.moduli = moduli
        self.sp_index = m_count - 1

        self.qs = np.array(moduli, dtype=np.uint64)
        self.qinvs = np.array([(-pow(q, -1, _R64)) % _R64 for q in moduli],
                              dtype=np.uint64)
        self.r2s = np.array([(1 << 128) % q for q in moduli], dtype=np.uint64)
        self.halfq = np.array([q // 2 for q in moduli], dtype=np.uint64)
        self.ninvs = np.array([pow(n, -1, q) * _R64 % q for q in moduli],
                              dtype=np.uint64)

        brv = np.array([_bit_rev(j, self.logn) for j in range(n)],
                       dtype=np.int64)
        self.psis = np.empty((m_count, n), dtype=np.uint64)
        self.ipsis = np.empty((m_count, n), dtype=np.uint64)
        for r, q in enumerate(moduli):
            psi = _find_psi(q, self.two_n)
            ipsi = pow(psi, -1, q)
            fwd = np.empty(n, dtype=np.uint64)
            inv = np.empty(n, dtype=np.uint64)
            pf, pi = 1, 1
            for e in range(n):
                fwd[e] = pf * _R64 % q
                inv[e] = pi * _R64 % q
                pf = pf * psi % q
                pi = pi * ipsi % q
            self.psis[r] = fwd[brv]
            self.ipsis[r] = inv[brv]

        chain = params.modulus_chain
        nl = len(chain)
        p = params.special_prime
        self.pinv_mont = np.array([pow(p, -1, q) * _R64 % q for q in chain],
                                  dtype=np.uint64)
        # qinv_cross[i, j] = q_i^{-1} mod q_j (Montgomery); used by rescale
        self.qinv_cross = np.zeros((nl, nl), dtype=np.uint64)
        for i in range(nl):
            for j in range(nl):
                if i != j:
                    self.qinv_cross[i, j] = pow(chain[i], -1, chain[j]) * _R64 % chain[j]

        # gadget integers G_i = p * (Q/q_i) * ((Q/q_i)^{-1} mod q_i), reduced
        # into every modulus, Montgomery form (for key generation)
        big_q = 1
        for q in chain:
            big_q *= q
        self.gadget_mont = np.zeros((nl, m_count), dtype=np.uint64)
        for i, qi in enumerate(chain):
            qhat = big_q // qi
            g_int = p * qhat * pow(qhat % qi, -1, qi)
            for a, m in enumerate(moduli):
                self.gadget_mont[i, a] = (g_int % m) * _R64 % m

        # left-rotation group: slot k draws from the root with exponent 5^k
        rg = np.empty(self.slots, dtype=np.int64)
        acc = 1
        for k in range(self.slots):
            rg[k] = acc
            acc = acc * 5 % self.two_n
        self.rot_group = rg

        self._automorph_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

        # two-limb CRT constants for decoding
        q0 = chain[0]
        self.q0_int = q0
        if nl > 1:
            q1 = chain[1]
            self.q1_int = q1
            self.q0_inv_mod_q1 = pow(q0, -1, q1)

    def automorph_maps(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        """Index/sign tables for x -> x^g on coefficients."""
        cached = self._automorph_cache.get(g)
        if cached is not None:
            return cached
        n = self.n
        idx = np.empty(n, dtype=np.int64)
        flip = np.empty(n, dtype=np.uint8)
        for j in range(n):
            e = j * g % self.two_n
            if e < n:
                idx[j] = e
                flip[j] = 0
            else:
                idx[j] = e - n
                flip[j] = 1
        self._automorph_cache[g] = (idx, flip)
        return idx, flip

    def galois_for_step(self, step: int) -> int:
        """Galois element realizing a cyclic left slot rotation by `step`."""
        return pow(5, step % self.slots, self.two_n)

    def rescale_inv_row(self, level: int) -> np.ndarray:
        """q_level^{-1} mod q_j for j < level, Montgomery form."""
        return np.ascontiguousarray(self.qinv_cross[level, :level])

    def ntt(self, mat: np.ndarray) -> None:
        nd = mat.shape[0]
        backend.ntt_rows(mat, self.psis[:nd], self.qs[:nd], self.qinvs[:nd])

    def intt(self, mat: np.ndarray) -> None:
        nd = mat.shape[0]
        backend.intt_rows(mat, self.ipsis[:nd], self.qs[:nd], self.qinvs[:nd],
                          self.ninvs[:nd])

    def coeffs_to_limbs(self, coeffs: np.ndarray, nd: int) -> np.ndarray:
        """Signed integer coefficients -> RNS residue rows (coefficient form)."""
        out = np.empty((nd, self.n), dtype=np.uint64)
        for r in range(nd):
            q = self.moduli[r]
            out[r] = np.mod(coeffs, q).astype(np.uint64)
        return out


_CTX_CACHE: dict[bytes, CkksContext] = {}


def get_context(params: SchemeParams) -> CkksContext:
    d = params.digest()
    ctx = _CTX_CACHE.get(d)
    if ctx is None:
        ctx = CkksContext(params)
        _CTX_CACHE[d] = ctx
    return ctx
