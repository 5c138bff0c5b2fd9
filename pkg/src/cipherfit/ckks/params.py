"""Scheme parameters: modulus chains, NTT-friendly prime search, presets.

All primes are word-sized (< 2^63) and congruent to 1 mod 2N so the
negacyclic NTT exists.  The special prime backs hybrid key-switching and
never holds ciphertext data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..errors import ParameterError

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for every n < 2^64."""
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(bit_size: int, count: int, two_n: int,
                    avoid: set[int] | None = None) -> list[int]:
    """First `count` primes p = c*2N + 1 nearest 2^bit_size, alternating sides.

    Keeping primes tight around 2^bit_size keeps the rescale scale drift
    far below the add-alignment tolerance.
    """
    avoid = set(avoid or ())
    target = 1 << bit_size
    c0 = target // two_n
    found: list[int] = []
    lo_c, hi_c = c0, c0 + 1
    while len(found) < count:
        lo_p = lo_c * two_n + 1
        hi_p = hi_c * two_n + 1
        # pick whichever candidate sits closer to the target
        if target - lo_p <= hi_p - target and lo_c > 0:
            cand, lo_c = lo_p, lo_c - 1
        else:
            cand, hi_c = hi_p, hi_c + 1
        if cand >= (1 << 63):
            continue
        if cand not in avoid and is_prime(cand):
            found.append(cand)
    return found


def find_ntt_primes_below(bit_size: int, count: int, two_n: int,
                          avoid: set[int] | None = None) -> list[int]:
    """First `count` primes p = c*2N + 1 strictly below 2^bit_size, descending."""
    avoid = set(avoid or ())
    c = ((1 << bit_size) - 2) // two_n
    found: list[int] = []
    while len(found) < count:
        if c <= 0:
            raise ParameterError(f"no {bit_size}-bit prime = 1 mod {two_n}")
        p = c * two_n + 1
        c -= 1
        if p < (1 << (bit_size - 1)):
            raise ParameterError(f"no {bit_size}-bit prime = 1 mod {two_n}")
        if p not in avoid and is_prime(p):
            found.append(p)
    return found


@dataclass(frozen=True)
class SchemeParams:
    """Leveled RNS-CKKS parameter set.

    modulus_chain[0] is the base prime (final decryption modulus); the rest
    are rescale primes.  max_level equals len(modulus_chain) - 1 and a fresh
    ciphertext supports exactly that many sequential multiplications.
    """

    ring_degree: int
    modulus_chain: tuple[int, ...]
    special_prime: int
    default_scale: float
    error_stddev: float = 3.2
    security_label: str = "toy-no-security-claim"

    def __post_init__(self):
        n = self.ring_degree
        if n < 8 or n & (n - 1):
            raise ParameterError(f"ring_degree {n} is not a power of two >= 8")
        two_n = 2 * n
        chain = self.modulus_chain
        if not chain:
            raise ParameterError("modulus_chain is empty")
        seen = set()
        for q in (*chain, self.special_prime):
            if q in seen:
                raise ParameterError(f"duplicate prime {q}")
            seen.add(q)
            if q >= (1 << 63):
                raise ParameterError(f"prime {q} exceeds 63 bits")
            if q % two_n != 1:
                raise ParameterError(f"prime {q} is not 1 mod {two_n}")
            if not is_prime(q):
                raise ParameterError(f"modulus {q} is not prime")
        if self.special_prime < max(chain):
            raise ParameterError("special prime must dominate every chain prime")
        if self.default_scale <= 0:
            raise ParameterError("default_scale must be positive")
        # rescale correctness: once a mult is possible (level >= 1), the
        # modulus product must exceed scale^2
        prod = chain[0]
        for q in chain[1:]:
            prod *= q
            if prod <= self.default_scale ** 2:
                raise ParameterError("modulus chain too small for default_scale")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def max_level(self) -> int:
        return len(self.modulus_chain) - 1

    def digest(self) -> bytes:
        cached = self.__dict__.get("_digest")
        if cached is not None:
            return cached
        canon = "|".join([
            "ckks-rns-v1",
            str(self.ring_degree),
            ",".join(str(q) for q in self.modulus_chain),
            str(self.special_prime),
            repr(self.default_scale),
            repr(self.error_stddev),
            self.security_label,
        ])
        cached = hashlib.sha256(canon.encode()).digest()
        object.__setattr__(self, "_digest", cached)
        return cached


def _build(ring_log2: int, levels: int, label: str) -> SchemeParams:
    n = 1 << ring_log2
    two_n = 2 * n
    special = find_ntt_primes_below(60, 1, two_n)[0]
    base = find_ntt_primes_below(60, 1, two_n, avoid={special})
    data = find_ntt_primes(40, levels, two_n)
    return SchemeParams(
        ring_degree=n,
        modulus_chain=(base[0], *data),
        special_prime=special,
        default_scale=float(2 ** 40),
        security_label=label,
    )


_PRESET_CACHE: dict[str, SchemeParams] = {}


def preset(name: str) -> SchemeParams:
    """Named parameter sets.

    desk      -- ring 2^13, 8 usable levels; fast functional runs, no security.
    fgb-like  -- ring 2^16 mirroring a 128-bit-target production context.
    small     -- ring 2^9, 8 levels; unit tests.
    tiny      -- ring 2^7, 4 levels; smallest ring that still multiplies.
    kernel    -- ring 2^8, 3 levels; exhaustive matrix-kernel sweeps.
    """
    if name in _PRESET_CACHE:
        return _PRESET_CACHE[name]
    if name == "desk":
        p = _build(13, 8, "toy-no-security-claim")
    elif name == "fgb-like":
        p = _build(16, 41, "128-bit-classical-target")
    elif name == "small":
        p = _build(9, 8, "toy-no-security-claim")
    elif name == "tiny":
        p = _build(7, 4, "toy-no-security-claim")
    elif name == "kernel":
        p = _build(8, 3, "toy-no-security-claim")
    else:
        raise ParameterError(f"unknown preset {name!r}")
    _PRESET_CACHE[name] = p
    return p


PRESET_NAMES = ("desk", "fgb-like", "small", "tiny", "kernel")
