"""Polynomial-friendly approximations evaluated under encryption."""

from .softmax import SoftmaxConfig, aexp, ainv_ciphertext, asoftmax
from .nag import momentum_blend, momentum_blends, nag_update
from .reference import (aexp_clear, ainv_clear, asoftmax_clear,
                        softmax_exact, cross_entropy, accuracy)

__all__ = [
    "SoftmaxConfig", "aexp", "ainv_ciphertext", "asoftmax",
    "momentum_blend", "momentum_blends", "nag_update",
    "aexp_clear", "ainv_clear", "asoftmax_clear",
    "softmax_exact", "cross_entropy", "accuracy",
]
