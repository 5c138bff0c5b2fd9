"""Accelerated-gradient momentum schedule and the encrypted update step."""

from __future__ import annotations

import math

from .. import ckks
from ..ckks import SchemeParams
from ..linalg import EncMatrix, mat_add, mat_sub, mat_scale


def momentum_blend(step: int) -> float:
    """Blend weight gamma_t for the lookahead sequence at global step t.

    lambda_0 = 0, lambda_{t+1} = (1 + sqrt(1 + 4 lambda_t^2)) / 2,
    gamma_t = (1 - lambda_t) / lambda_{t+1}.
    """
    lam = 0.0
    for _ in range(step):
        lam = (1.0 + math.sqrt(1.0 + 4.0 * lam * lam)) / 2.0
    nxt = (1.0 + math.sqrt(1.0 + 4.0 * lam * lam)) / 2.0
    return (1.0 - lam) / nxt


def momentum_blends(steps: int) -> list[float]:
    """gamma_0 .. gamma_{steps-1} without quadratic recomputation."""
    out = []
    lam = 0.0
    for _ in range(steps):
        nxt = (1.0 + math.sqrt(1.0 + 4.0 * lam * lam)) / 2.0
        out.append((1.0 - lam) / nxt)
        lam = nxt
    return out


def nag_update(params: SchemeParams, lookahead: EncMatrix, grad: EncMatrix,
               weights_prev: EncMatrix, lr_over_batch: float,
               gamma: float) -> tuple[EncMatrix, EncMatrix]:
    """One accelerated step.

    weights_next   = lookahead - lr_over_batch * grad
    lookahead_next = (1 - gamma) * weights_next + gamma * weights_prev

    Costs one level on the gradient side and one more for the blend.
    """
    step = mat_scale(params, grad, lr_over_batch)
    weights_next = mat_sub(params, lookahead, step)
    blended = mat_add(params,
                      mat_scale(params, weights_next, 1.0 - gamma),
                      mat_scale(params, weights_prev, gamma))
    return weights_next, blended
