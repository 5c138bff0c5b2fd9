"""Slot encoding: roundtrips, linearity, and a direct evaluation oracle."""

import numpy as np
import pytest

from cipherfit import ckks
from cipherfit.ckks.encoding import _to_signed_ints
from cipherfit.errors import CapacityError, ParameterError

PARAMS = ckks.preset("tiny")
CTX = ckks.get_context(PARAMS)


def test_roundtrip_full_slots():
    rng = np.random.default_rng(0)
    v = rng.uniform(-10, 10, CTX.slots)
    back = ckks.decode(PARAMS, ckks.encode(PARAMS, v))
    err = np.max(np.abs(back - v))
    assert err < 1e-9, f"roundtrip error {err:.3e}"


def test_roundtrip_partial_vector_pads_with_zeros():
    v = np.array([1.5, -2.25, 3.0])
    back = ckks.decode(PARAMS, ckks.encode(PARAMS, v))
    assert np.max(np.abs(back[:3] - v)) < 1e-9
    assert np.max(np.abs(back[3:])) < 1e-9, "padding slots must decode to zero"


@pytest.mark.parametrize("scale_log2", [30, 40, 50])
def test_roundtrip_other_scales(scale_log2):
    rng = np.random.default_rng(scale_log2)
    v = rng.uniform(-2, 2, CTX.slots)
    pt = ckks.encode(PARAMS, v, scale=2.0 ** scale_log2)
    err = np.max(np.abs(ckks.decode(PARAMS, pt) - v))
    # coarser scales round harder
    assert err < CTX.slots * 2.0 ** -(scale_log2 - 6), f"err {err:.3e}"


def test_roundtrip_every_level():
    rng = np.random.default_rng(2)
    v = rng.uniform(-1, 1, CTX.slots)
    for lv in range(PARAMS.max_level + 1):
        pt = ckks.encode(PARAMS, v, level=lv)
        assert pt.limb_count == lv + 1
        err = np.max(np.abs(ckks.decode(PARAMS, pt) - v))
        assert err < 1e-9, f"level {lv} err {err:.3e}"


def test_decode_matches_direct_root_evaluation():
    """Oracle: evaluate the integer polynomial at the odd roots directly."""
    rng = np.random.default_rng(3)
    v = rng.uniform(-4, 4, CTX.slots)
    pt = ckks.encode(PARAMS, v)
    ints = _to_signed_ints(CTX, pt.data, pt.level)
    coeffs = np.array([float(x) for x in ints]) / pt.scale

    n, two_n = CTX.n, CTX.two_n
    expect = np.empty(CTX.slots, dtype=np.complex128)
    for k in range(CTX.slots):
        root = np.exp(2j * np.pi * (pow(5, k, two_n)) / two_n)
        expect[k] = np.polyval(coeffs[::-1], root)
    got = ckks.decode(PARAMS, pt)
    assert np.max(np.abs(expect.real - got)) < 1e-8
    assert np.max(np.abs(expect.imag)) < 1e-8, "real payload should sit in real slots"


def test_encode_is_linear():
    from cipherfit.ckks.encoding import Plaintext

    rng = np.random.default_rng(4)
    a = rng.uniform(-1, 1, CTX.slots)
    b = rng.uniform(-1, 1, CTX.slots)
    pa, pb = ckks.encode(PARAMS, a), ckks.encode(PARAMS, b)
    summed = np.empty_like(pa.data)
    for r, q in enumerate(PARAMS.modulus_chain):
        summed[r] = (pa.data[r] + pb.data[r]) % np.uint64(q)
    pt = Plaintext(summed, pa.level, pa.scale, pa.params_digest)
    err = np.max(np.abs(ckks.decode(PARAMS, pt) - (a + b)))
    assert err < 1e-9, f"residue-row addition drifted {err:.3e}"


def test_capacity_and_level_errors():
    with pytest.raises(CapacityError):
        ckks.encode(PARAMS, np.ones(CTX.slots + 1))
    with pytest.raises(ParameterError):
        ckks.encode(PARAMS, np.ones(4), level=PARAMS.max_level + 1)
    with pytest.raises(ParameterError):
        ckks.encode(PARAMS, np.array([2.0 ** 32]), scale=2.0 ** 40)


def test_decode_count_argument():
    v = np.arange(5, dtype=float)
    got = ckks.decode(PARAMS, ckks.encode(PARAMS, v), count=5)
    assert got.shape == (5,)
    assert np.max(np.abs(got - v)) < 1e-9
