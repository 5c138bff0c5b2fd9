"""Plaintext trainer mirroring the encrypted loop step for step.

Same batching, same zero initialization, same momentum schedule, same
division by each batch's true row count — the only difference is exact
float64 arithmetic, with the row softmax computed either by the same
polynomial approximation (in the clear) or exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..approx import (
    accuracy,
    asoftmax_clear,
    cross_entropy,
    momentum_blends,
    softmax_exact,
)
from ..errors import ParameterError
from ..io.report import EpochMetrics
from .client import TrainingConfig, batch_plan
from .data import FeatureDataset


@dataclass
class OracleResult:
    weights: np.ndarray
    metrics: List[EpochMetrics] = field(default_factory=list)
    max_abs_logit: float = 0.0


def plaintext_oracle_train(
    train: FeatureDataset,
    val: FeatureDataset,
    config: TrainingConfig,
    softmax: str = "approx",
) -> OracleResult:
    """Run the same accelerated trajectory in the clear.

    softmax="approx" uses the identical polynomial softmax (tight
    comparator for the encrypted run); softmax="exact" is the usual
    softmax-regression baseline.
    """
    if softmax not in ("approx", "exact"):
        raise ParameterError(f"unknown softmax mode {softmax!r}")
    cfg = config.softmax_for(train.classes)
    row_softmax = (
        (lambda z: asoftmax_clear(z, cfg))
        if softmax == "approx"
        else softmax_exact
    )

    k, d = train.classes, train.dim
    weights = np.zeros((k, d))
    look = np.zeros((k, d))
    plan = batch_plan(train.count, config.batch_size)
    gammas = momentum_blends(config.epochs * len(plan))
    result = OracleResult(weights)

    t = 0
    mark = time.monotonic()
    for epoch in range(config.epochs):
        for start, stop in plan:
            xb = train.features[start:stop]
            yb = train.onehot[start:stop]
            logits = xb @ look.T
            result.max_abs_logit = max(
                result.max_abs_logit, float(np.abs(logits).max())
            )
            resid = row_softmax(logits) - yb
            grad = resid.T @ xb / (stop - start)
            weights = look - config.learning_rate * grad
            look = (1.0 - gammas[t]) * weights + gammas[t] * result.weights
            result.weights = weights
            t += 1
        val_logits = val.features @ weights.T
        probs = softmax_exact(val_logits)
        now = time.monotonic()
        result.metrics.append(
            EpochMetrics(
                epoch=epoch,
                t=t,
                val_loss=cross_entropy(probs, val.labels),
                val_accuracy=accuracy(probs, val.labels),
                refresh_count=0,
                wall_ms=(now - mark) * 1e3,
            )
        )
        mark = now
    return result


def infer_logits(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    return features @ weights.T


def domain_ok(result: OracleResult, cfg_bound: float,
              margin: float = 0.9) -> bool:
    """Whether every logit stayed inside the approximation's safe region."""
    return result.max_abs_logit <= margin * cfg_bound
