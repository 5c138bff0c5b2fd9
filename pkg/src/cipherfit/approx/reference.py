"""Float64 mirrors of the encrypted approximations, plus training metrics.

The mirrors run the exact same arithmetic (affine + squarings; seeded
reciprocal iteration) so encrypted outputs can be checked against them to
noise precision, independently of how far both sit from the true softmax.
"""

from __future__ import annotations

import numpy as np

from .softmax import SoftmaxConfig


def aexp_clear(x: np.ndarray, exp_rounds: int) -> np.ndarray:
    base = 1.0 + np.asarray(x, dtype=np.float64) / (2.0 ** exp_rounds)
    for _ in range(exp_rounds):
        base = base * base
    return base


def ainv_clear(d: np.ndarray, cfg: SoftmaxConfig) -> np.ndarray:
    y = np.full_like(np.asarray(d, dtype=np.float64), cfg.recip_seed)
    for _ in range(cfg.inv_rounds):
        y = y * (2.0 - d * y)
    return y


def asoftmax_clear(logits: np.ndarray, cfg: SoftmaxConfig) -> np.ndarray:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    e = aexp_clear(logits, cfg.exp_rounds)
    den = e.sum(axis=1, keepdims=True)
    return e * ainv_clear(den, cfg)


def softmax_exact(logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; labels are class indices."""
    probs = np.atleast_2d(probs)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.clip(picked, 1e-12, None))))


def accuracy(probs_or_logits: np.ndarray, labels: np.ndarray) -> float:
    pred = np.argmax(np.atleast_2d(probs_or_logits), axis=1)
    return float(np.mean(pred == np.asarray(labels)))
