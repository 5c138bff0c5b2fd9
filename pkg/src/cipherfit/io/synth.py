"""Deterministic synthetic classification data: Gaussian class blobs."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..errors import ParameterError

WITHIN_CLASS_STD = 0.5


def synth_blobs(
    classes: int,
    dim: int,
    count: int,
    seed: int,
    separation: float = 4.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample `count` points from `classes` Gaussian blobs in `dim` dimensions.

    Class means sit along orthonormal directions, scaled so every pair of
    means is exactly `separation` apart; within-class spread is fixed at
    0.5 per axis.  Class counts differ by at most one, and the row order is
    a seeded shuffle so any prefix split stays class-balanced.
    """
    if classes < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")
    if dim < 2:
        raise ParameterError(f"need at least 2 dimensions, got {dim}")
    if dim < classes:
        raise ParameterError(f"dim {dim} < classes {classes}: no orthonormal means")
    if count < classes:
        raise ParameterError(f"count {count} < classes {classes}")

    rng = np.random.Generator(np.random.PCG64(seed))
    basis, _ = np.linalg.qr(rng.standard_normal((dim, classes)))
    # |s*q_i - s*q_j| = s*sqrt(2) for orthonormal q, so scale accordingly
    means = basis.T * (separation / np.sqrt(2.0))

    labels = np.arange(count) % classes
    points = means[labels] + WITHIN_CLASS_STD * rng.standard_normal(
        (count, dim)
    )
    order = rng.permutation(count)
    return points[order], labels[order]
