"""Numba kernels for RNS polynomial arithmetic.

Polynomials live in Z_q[x]/(x^N + 1), one uint64 row per RNS limb.  Word
arithmetic uses Montgomery reduction with R = 2^64 (primes stay below 2^63),
so twiddles and key material are stored pre-multiplied by R.

Stacked per-modulus tables put the data primes first and the key-switching
special prime in the last row.  Key-switching decomposes into per-prime
digits (one digit per chain prime, single special prime), which keeps
digit magnitudes at q_i and the noise floor far below the scale.
"""

import numba
import numpy as np

U64 = np.uint64
_MASK32 = U64(0xFFFFFFFF)
_ZERO = U64(0)
_ONE = U64(1)


@numba.njit(inline="always")
def _mulhi(a, b):
    a0 = a & _MASK32
    a1 = a >> U64(32)
    b0 = b & _MASK32
    b1 = b >> U64(32)
    lo = a0 * b0
    m1 = a1 * b0 + (lo >> U64(32))
    m2 = a0 * b1 + (m1 & _MASK32)
    return a1 * b1 + (m1 >> U64(32)) + (m2 >> U64(32))


@numba.njit(inline="always")
def _redc(hi, lo, q, qinv):
    m = lo * qinv
    t = hi + _mulhi(m, q)
    if lo != _ZERO:
        t += _ONE
    if t >= q:
        t -= q
    return t


@numba.njit(inline="always")
def _mont_mul(a, b_mont, q, qinv):
    # a plain, b in Montgomery form -> a*b mod q, plain
    return _redc(_mulhi(a, b_mont), a * b_mont, q, qinv)


@numba.njit(inline="always")
def _to_mont(a, r2, q, qinv):
    return _mont_mul(a, r2, q, qinv)


@numba.njit(inline="always")
def _addmod(a, b, q):
    t = a + b
    if t >= q:
        t -= q
    return t


@numba.njit(inline="always")
def _submod(a, b, q):
    t = a + q - b
    if t >= q:
        t -= q
    return t


@numba.njit(cache=True)
def ntt_inplace(a, psis, q, qinv):
    """Forward negacyclic NTT; twiddle table in bit-reversed order, Montgomery form."""
    n = a.shape[0]
    t = n
    m = 1
    while m < n:
        t >>= 1
        for i in range(m):
            w = psis[m + i]
            j1 = 2 * i * t
            for j in range(j1, j1 + t):
                u = a[j]
                v = _mont_mul(a[j + t], w, q, qinv)
                a[j] = _addmod(u, v, q)
                a[j + t] = _submod(u, v, q)
        m <<= 1


@numba.njit(cache=True)
def intt_inplace(a, ipsis, q, qinv, ninv_mont):
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        j1 = 0
        for i in range(h):
            w = ipsis[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                a[j] = _addmod(u, v, q)
                a[j + t] = _mont_mul(_submod(u, v, q), w, q, qinv)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        a[j] = _mont_mul(a[j], ninv_mont, q, qinv)


@numba.njit(cache=True)
def ntt_rows(mat, psis, qs, qinvs):
    for r in range(mat.shape[0]):
        ntt_inplace(mat[r], psis[r], qs[r], qinvs[r])


@numba.njit(cache=True)
def intt_rows(mat, ipsis, qs, qinvs, ninvs):
    for r in range(mat.shape[0]):
        intt_inplace(mat[r], ipsis[r], qs[r], qinvs[r], ninvs[r])


@numba.njit(cache=True)
def vec_mul(a, b, qs, qinvs, r2s):
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        qinv = qinvs[r]
        r2 = r2s[r]
        for j in range(a.shape[1]):
            am = _to_mont(a[r, j], r2, q, qinv)
            out[r, j] = _mont_mul(b[r, j], am, q, qinv)
    return out


@numba.njit(cache=True)
def vec_mul_mont(a, b_mont, qs, qinvs):
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        qinv = qinvs[r]
        for j in range(a.shape[1]):
            out[r, j] = _mont_mul(a[r, j], b_mont[r, j], q, qinv)
    return out


@numba.njit(cache=True)
def vec_add(a, b, qs):
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        for j in range(a.shape[1]):
            out[r, j] = _addmod(a[r, j], b[r, j], q)
    return out


@numba.njit(cache=True)
def vec_sub(a, b, qs):
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        for j in range(a.shape[1]):
            out[r, j] = _submod(a[r, j], b[r, j], q)
    return out


@numba.njit(cache=True)
def vec_neg(a, qs):
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        for j in range(a.shape[1]):
            v = a[r, j]
            out[r, j] = q - v if v != _ZERO else _ZERO
    return out


@numba.njit(cache=True)
def scalar_mul(a, s_mont, qs, qinvs):
    """Per-row scalar multiply; scalars pre-Montgomeryized."""
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q = qs[r]
        qinv = qinvs[r]
        s = s_mont[r]
        for j in range(a.shape[1]):
            out[r, j] = _mont_mul(a[r, j], s, q, qinv)
    return out


@numba.njit(cache=True)
def to_mont_rows(a, qs, qinvs, r2s):
    for r in range(a.shape[0]):
        q = qs[r]
        qinv = qinvs[r]
        r2 = r2s[r]
        for j in range(a.shape[1]):
            a[r, j] = _to_mont(a[r, j], r2, q, qinv)


@numba.njit(cache=True)
def automorph_rows(src, idx, flip, qs):
    """x(x) -> x(x^g) on coefficient-form rows; idx/flip precomputed for g."""
    out = np.zeros_like(src)
    for r in range(src.shape[0]):
        q = qs[r]
        for j in range(src.shape[1]):
            v = src[r, j]
            if flip[j] != 0 and v != _ZERO:
                v = q - v
            out[r, idx[j]] = v
    return out


@numba.njit(inline="always")
def _rebase_to(dst, src, half, qi, qa):
    """Centered lift of residues mod q_i, reduced into modulus q_a."""
    n = src.shape[0]
    for j in range(n):
        v = src[j]
        if v > half:
            # negative representative: q_a - ((q_i - v) mod q_a)
            w = (qi - v) % qa
            dst[j] = qa - w if w != _ZERO else _ZERO
        else:
            dst[j] = v % qa


@numba.njit(cache=True)
def ks_core(d_coeff, d_diag, use_diag, kb, ka,
            qs, qinvs, r2s, halfq, psis, ipsis, ninvs, pinv_mont):
    """Hybrid key-switch of a coefficient-form input.

    d_coeff: (nd, N) digit residues mod q_0..q_{nd-1}.
    d_diag:  (nd, N) the same digits already in NTT form (diagonal reuse).
    kb/ka:   (digits, moduli, N) key halves, Montgomery form, special last.
    Returns the switched pair at the input level (special prime folded away).
    """
    nd = d_coeff.shape[0]
    n = d_coeff.shape[1]
    sp = kb.shape[1] - 1
    nmod = nd + 1  # data moduli in use plus the special prime

    acc_b = np.zeros((nmod, n), dtype=np.uint64)
    acc_a = np.zeros((nmod, n), dtype=np.uint64)
    tmp = np.empty(n, dtype=np.uint64)

    for i in range(nd):
        qi = qs[i]
        half = halfq[i]
        for ap in range(nmod):
            al = ap if ap < nd else sp
            if al == i and use_diag:
                di = d_diag[i]
                qa = qs[al]
                qainv = qinvs[al]
                for j in range(n):
                    v = di[j]
                    acc_b[ap, j] = _addmod(acc_b[ap, j], _mont_mul(v, kb[i, al, j], qa, qainv), qa)
                    acc_a[ap, j] = _addmod(acc_a[ap, j], _mont_mul(v, ka[i, al, j], qa, qainv), qa)
            else:
                qa = qs[al]
                qainv = qinvs[al]
                _rebase_to(tmp, d_coeff[i], half, qi, qa)
                ntt_inplace(tmp, psis[al], qa, qainv)
                for j in range(n):
                    v = tmp[j]
                    acc_b[ap, j] = _addmod(acc_b[ap, j], _mont_mul(v, kb[i, al, j], qa, qainv), qa)
                    acc_a[ap, j] = _addmod(acc_a[ap, j], _mont_mul(v, ka[i, al, j], qa, qainv), qa)

    # divide by the special prime: out = (acc - lift(acc mod p)) * p^{-1}
    out_b = np.empty((nd, n), dtype=np.uint64)
    out_a = np.empty((nd, n), dtype=np.uint64)
    qsp = qs[sp]
    halfp = halfq[sp]
    for comp in range(2):
        acc = acc_b if comp == 0 else acc_a
        out = out_b if comp == 0 else out_a
        spc = acc[nd].copy()
        intt_inplace(spc, ipsis[sp], qsp, qinvs[sp], ninvs[sp])
        for ap in range(nd):
            qa = qs[ap]
            qainv = qinvs[ap]
            _rebase_to(tmp, spc, halfp, qsp, qa)
            ntt_inplace(tmp, psis[ap], qa, qainv)
            pim = pinv_mont[ap]
            for j in range(n):
                out[ap, j] = _mont_mul(_submod(acc[ap, j], tmp[j], qa), pim, qa, qainv)
    return out_b, out_a


@numba.njit(cache=True)
def rescale_rows(c, qs, qinvs, halfq, psis, ipsis, ninvs, qtop_inv_mont):
    """Drop the top limb: out_j = (c_j - lift(c_top)) * q_top^{-1} mod q_j."""
    nd = c.shape[0]
    n = c.shape[1]
    top = nd - 1
    qt = qs[top]
    half = halfq[top]
    tc = c[top].copy()
    intt_inplace(tc, ipsis[top], qt, qinvs[top], ninvs[top])
    out = np.empty((top, n), dtype=np.uint64)
    tmp = np.empty(n, dtype=np.uint64)
    for ap in range(top):
        qa = qs[ap]
        qainv = qinvs[ap]
        _rebase_to(tmp, tc, half, qt, qa)
        ntt_inplace(tmp, psis[ap], qa, qainv)
        sm = qtop_inv_mont[ap]
        for j in range(n):
            out[ap, j] = _mont_mul(_submod(c[ap, j], tmp[j], qa), sm, qa, qainv)
    return out


@numba.njit(cache=True)
def mult_relin_rescale(c0a, c1a, c0b, c1b, kb, ka,
                       qs, qinvs, r2s, halfq, psis, ipsis, ninvs,
                       pinv_mont, qtop_inv_mont):
    """Fused ciphertext product: tensor, relinearize, rescale."""
    nd = c0a.shape[0]
    n = c0a.shape[1]
    t0 = np.empty((nd, n), dtype=np.uint64)
    t1 = np.empty((nd, n), dtype=np.uint64)
    t2 = np.empty((nd, n), dtype=np.uint64)
    for r in range(nd):
        q = qs[r]
        qinv = qinvs[r]
        r2 = r2s[r]
        for j in range(n):
            x0 = _to_mont(c0a[r, j], r2, q, qinv)
            x1 = _to_mont(c1a[r, j], r2, q, qinv)
            y0 = c0b[r, j]
            y1 = c1b[r, j]
            t0[r, j] = _mont_mul(y0, x0, q, qinv)
            t1[r, j] = _addmod(_mont_mul(y1, x0, q, qinv), _mont_mul(y0, x1, q, qinv), q)
            t2[r, j] = _mont_mul(y1, x1, q, qinv)
    d_coeff = t2.copy()
    intt_rows(d_coeff, ipsis[:nd], qs[:nd], qinvs[:nd], ninvs[:nd])
    rb, ra = ks_core(d_coeff, t2, True, kb, ka,
                     qs, qinvs, r2s, halfq, psis, ipsis, ninvs, pinv_mont)
    for r in range(nd):
        q = qs[r]
        for j in range(n):
            rb[r, j] = _addmod(rb[r, j], t0[r, j], q)
            ra[r, j] = _addmod(ra[r, j], t1[r, j], q)
    ob = rescale_rows(rb, qs, qinvs, halfq, psis, ipsis, ninvs, qtop_inv_mont)
    oa = rescale_rows(ra, qs, qinvs, halfq, psis, ipsis, ninvs, qtop_inv_mont)
    return ob, oa


@numba.njit(cache=True)
def rotate_core(c0, c1, idx, flip, kb, ka,
                qs, qinvs, r2s, halfq, psis, ipsis, ninvs, pinv_mont):
    """Galois automorphism plus key-switch back to the base secret."""
    nd = c0.shape[0]
    d = c1.copy()
    intt_rows(d, ipsis[:nd], qs[:nd], qinvs[:nd], ninvs[:nd])
    d = automorph_rows(d, idx, flip, qs)
    ob, oa = ks_core(d, d, False, kb, ka,
                     qs, qinvs, r2s, halfq, psis, ipsis, ninvs, pinv_mont)
    p0 = c0.copy()
    intt_rows(p0, ipsis[:nd], qs[:nd], qinvs[:nd], ninvs[:nd])
    p0 = automorph_rows(p0, idx, flip, qs)
    ntt_rows(p0, psis[:nd], qs[:nd], qinvs[:nd])
    n = c0.shape[1]
    for r in range(nd):
        q = qs[r]
        for j in range(n):
            ob[r, j] = _addmod(ob[r, j], p0[r, j], q)
    return ob, oa


