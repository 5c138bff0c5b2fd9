"""Leveled approximate-arithmetic lattice cipher over power-of-two rings."""

from .params import SchemeParams, preset, PRESET_NAMES, find_ntt_primes
from .context import CkksContext, get_context
from .encoding import Plaintext, encode, decode
from .keys import (SecretKey, PublicKey, SwitchKey, EvalKeySet, KeyBundle,
                   keygen, default_rotation_steps)
from .ops import (Ciphertext, encrypt, decrypt, add, sub, negate,
                  add_plain, sub_plain, mult_plain, mult, square,
                  rescale, rotate, mod_switch_to, ensure_levels,
                  SCALE_REL_TOL)
from .serial import (secret_key_to_bytes, secret_key_from_bytes,
                     public_key_to_bytes, public_key_from_bytes,
                     eval_keys_to_bytes, eval_keys_from_bytes,
                     plaintext_to_bytes, plaintext_from_bytes,
                     ciphertext_to_bytes, ciphertext_from_bytes)

__all__ = [
    "SchemeParams", "preset", "PRESET_NAMES", "find_ntt_primes",
    "CkksContext", "get_context",
    "Plaintext", "encode", "decode",
    "SecretKey", "PublicKey", "SwitchKey", "EvalKeySet", "KeyBundle",
    "keygen", "default_rotation_steps",
    "Ciphertext", "encrypt", "decrypt", "add", "sub", "negate",
    "add_plain", "sub_plain", "mult_plain", "mult", "square",
    "rescale", "rotate", "mod_switch_to", "ensure_levels", "SCALE_REL_TOL",
    "secret_key_to_bytes", "secret_key_from_bytes",
    "public_key_to_bytes", "public_key_from_bytes",
    "eval_keys_to_bytes", "eval_keys_from_bytes",
    "plaintext_to_bytes", "plaintext_from_bytes",
    "ciphertext_to_bytes", "ciphertext_from_bytes",
]
