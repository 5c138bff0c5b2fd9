"""Packed-matrix semantics against numpy, including fold-spill hygiene."""

import numpy as np
import pytest

from cipherfit import ckks, linalg
from cipherfit.errors import (DepthExhaustedError, DimensionError, LayoutError)

PARAMS = ckks.preset("small")
KEYS = ckks.keygen(PARAMS, seed=21)
LAYOUT = linalg.TileLayout.for_dims(PARAMS, 16)
RNG = np.random.default_rng(17)


def _enc(mat, level=None, seed=0):
    return linalg.encrypt_matrix(PARAMS, KEYS.public, mat, LAYOUT,
                                 level=level, rng=seed)


def _dec(em):
    return linalg.decrypt_matrix(PARAMS, KEYS.secret, em)


def test_layout_geometry():
    lo = linalg.TileLayout.for_dims(PARAMS, 10, 3)
    assert lo.seg_width == 16
    assert lo.seg_per_ct == PARAMS.slot_count // 16
    assert lo.ct_count(1) == 1
    assert lo.ct_count(lo.seg_per_ct) == 1
    assert lo.ct_count(lo.seg_per_ct + 1) == 2
    ct, slot = lo.slot_of(lo.seg_per_ct + 2, 5)
    assert ct == 1
    assert slot == 2 * 16 + 5


def test_layout_rejects_oversized_dimension():
    with pytest.raises(LayoutError):
        linalg.TileLayout.for_dims(PARAMS, PARAMS.slot_count + 1)
    with pytest.raises(LayoutError):
        linalg.TileLayout.for_dims(PARAMS, 0)


@pytest.mark.parametrize("rows,cols", [(1, 1), (3, 5), (16, 16), (17, 9), (40, 2)])
def test_pack_unpack_roundtrip(rows, cols):
    mat = RNG.uniform(-3, 3, (rows, cols))
    pts = linalg.pack_matrix(PARAMS, mat, LAYOUT)
    assert len(pts) == LAYOUT.ct_count(rows)
    back = linalg.unpack_matrix(PARAMS, pts, rows, cols, LAYOUT)
    assert np.max(np.abs(back - mat)) < 1e-9


def test_encrypt_decrypt_matrix():
    mat = RNG.uniform(-2, 2, (20, 10))
    err = np.max(np.abs(_dec(_enc(mat)) - mat))
    assert err < 1e-5, f"matrix roundtrip err {err:.3e}"


def test_mat_add_sub_scale_plain():
    a = RNG.uniform(-1, 1, (9, 7))
    b = RNG.uniform(-1, 1, (9, 7))
    ea, eb = _enc(a, seed=1), _enc(b, seed=2)
    assert np.max(np.abs(_dec(linalg.mat_add(PARAMS, ea, eb)) - (a + b))) < 1e-5
    assert np.max(np.abs(_dec(linalg.mat_sub(PARAMS, ea, eb)) - (a - b))) < 1e-5
    sc = linalg.mat_scale(PARAMS, ea, -0.37)
    assert sc.level == ea.level - 1
    assert np.max(np.abs(_dec(sc) - a * -0.37)) < 1e-5
    ap = linalg.mat_add_plain(PARAMS, ea, b)
    assert ap.level == ea.level
    assert np.max(np.abs(_dec(ap) - (a + b))) < 1e-5


def test_mat_shape_mismatch_rejected():
    a, b = _enc(np.ones((3, 4))), _enc(np.ones((4, 3)))
    with pytest.raises(DimensionError):
        linalg.mat_add(PARAMS, a, b)
    with pytest.raises(DimensionError):
        linalg.mat_add_plain(PARAMS, a, np.ones((2, 2)))


@pytest.mark.parametrize("n,d,m,seed", [
    (5, 10, 3, 0),
    (1, 1, 1, 1),
    (16, 16, 16, 2),
    (20, 9, 7, 3),    # two row blocks on the left
    (40, 2, 5, 4),
])
def test_matmul_abt_matches_numpy(n, d, m, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (n, d))
    b = rng.uniform(-1, 1, (m, d))
    got = _dec(linalg.matmul_abt(PARAMS, KEYS.evaluation,
                                 _enc(a, seed=seed), _enc(b, seed=seed + 50)))
    err = np.max(np.abs(got - a @ b.T))
    assert err < 1e-4, f"A@B.T err {err:.3e} at shape ({n},{d})x({m},{d})"


@pytest.mark.parametrize("n,k,d,seed", [
    (20, 3, 10, 0),
    (1, 1, 1, 1),
    (16, 16, 16, 2),
    (33, 5, 8, 3),    # three row blocks
    (7, 2, 16, 4),
])
def test_matmul_atb_matches_numpy(n, k, d, seed):
    rng = np.random.default_rng(100 + seed)
    s = rng.uniform(-1, 1, (n, k))
    a = rng.uniform(-1, 1, (n, d))
    got = _dec(linalg.matmul_atb(PARAMS, KEYS.evaluation,
                                 _enc(s, seed=seed), _enc(a, seed=seed + 50)))
    err = np.max(np.abs(got - s.T @ a))
    assert err < 1e-4, f"S.T@A err {err:.3e} at shapes ({n},{k}), ({n},{d})"


def test_matmul_level_accounting():
    a = _enc(RNG.uniform(-1, 1, (4, 6)), seed=5)
    b = _enc(RNG.uniform(-1, 1, (3, 6)), seed=6)
    prod = linalg.matmul_abt(PARAMS, KEYS.evaluation, a, b)
    assert prod.level == min(a.level - 2, b.level - 3)
    s = _enc(RNG.uniform(-1, 1, (4, 3)), seed=7)
    grad = linalg.matmul_atb(PARAMS, KEYS.evaluation, s, a)
    assert grad.level == min(a.level - 2, s.level - 3)


def test_matmul_abt_and_atb_agree():
    """Dual route: A@B.T via both kernels (transposed inputs for the second)."""
    a = RNG.uniform(-1, 1, (6, 5))
    b = RNG.uniform(-1, 1, (4, 5))
    left = _dec(linalg.matmul_abt(PARAMS, KEYS.evaluation,
                                  _enc(a, seed=8), _enc(b, seed=9)))
    right = _dec(linalg.matmul_atb(PARAMS, KEYS.evaluation,
                                   _enc(a.T, seed=10), _enc(b.T, seed=11)))
    assert np.max(np.abs(left - right)) < 1e-4


def test_matmul_depth_exhaustion():
    a = _enc(np.ones((2, 2)), level=2, seed=12)
    b = _enc(np.ones((2, 2)), level=2, seed=13)
    with pytest.raises(DepthExhaustedError, match="matmul_abt"):
        linalg.matmul_abt(PARAMS, KEYS.evaluation, a, b)
    with pytest.raises(DepthExhaustedError, match="matmul_atb"):
        linalg.matmul_atb(PARAMS, KEYS.evaluation, a, b)


def test_matmul_inner_dim_mismatch():
    a = _enc(np.ones((2, 3)), seed=14)
    b = _enc(np.ones((2, 4)), seed=15)
    with pytest.raises(DimensionError):
        linalg.matmul_abt(PARAMS, KEYS.evaluation, a, b)
    with pytest.raises(DimensionError):
        linalg.matmul_atb(PARAMS, KEYS.evaluation, _enc(np.ones((3, 2))), a)


def test_result_slots_outside_region_are_clean():
    """Spill lanes must be masked off: all padding slots decode to ~0."""
    a = RNG.uniform(-1, 1, (5, 9))
    b = RNG.uniform(-1, 1, (3, 9))
    prod = linalg.matmul_abt(PARAMS, KEYS.evaluation,
                             _enc(a, seed=16), _enc(b, seed=17))
    full = ckks.decode(PARAMS, ckks.decrypt(PARAMS, KEYS.secret, prod.cts[0]))
    w = LAYOUT.seg_width
    for s in range(LAYOUT.seg_per_ct):
        seg = full[s * w:(s + 1) * w]
        if s < 5:
            assert np.max(np.abs(seg[3:])) < 1e-6, f"lane spill in segment {s}"
        else:
            assert np.max(np.abs(seg)) < 1e-6, f"row spill in segment {s}"


def test_enc_matrix_serialization_roundtrip():
    mat = RNG.uniform(-1, 1, (19, 11))
    em = _enc(mat, seed=18)
    blob = linalg.enc_matrix_to_bytes(PARAMS, em)
    back = linalg.enc_matrix_from_bytes(PARAMS, blob)
    assert (back.rows, back.cols) == (19, 11)
    assert back.layout == em.layout
    assert np.max(np.abs(_dec(back) - mat)) < 1e-5
