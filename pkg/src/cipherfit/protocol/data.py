"""Client-side dataset preparation: splits, standardization, one-hot labels.

Features are standardized with statistics fitted on the training split only,
clipped to +/-CLIP_BOUND, then divided by CLIP_BOUND so every encrypted value
lies in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DimensionError
from ..io.formats import Standardization

CLIP_BOUND = 4.0


@dataclass(frozen=True)
class FeatureDataset:
    """One split, already preprocessed and ready to pack."""

    features: np.ndarray
    labels: np.ndarray
    onehot: np.ndarray
    classes: int
    tag: str
    stats: Optional[Standardization]

    def __post_init__(self):
        rows = self.features.shape[0]
        if self.labels.shape != (rows,):
            raise DimensionError(
                f"{self.tag}: {rows} feature rows vs "
                f"{self.labels.shape[0]} labels"
            )
        if self.onehot.shape != (rows, self.classes):
            raise DimensionError(
                f"{self.tag}: one-hot shaped {self.onehot.shape}, "
                f"want ({rows}, {self.classes})"
            )

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def split_indices(
    count: int, ratios: Tuple[float, float, float], seed: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic permutation split into train/val/test index arrays."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios {ratios} must sum to 1")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(count)
    n_train = int(count * ratios[0])
    n_val = int(count * ratios[1])
    n_test = count - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"split of {count} rows at ratios {ratios} leaves an empty split"
        )
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def standardize_fit(train_features: np.ndarray) -> Standardization:
    means = train_features.mean(axis=0)
    stds = train_features.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    return Standardization(means=means, stds=stds)


def preprocess(features: np.ndarray, stats: Standardization) -> np.ndarray:
    z = stats.apply(features)
    return np.clip(z, -CLIP_BOUND, CLIP_BOUND) / CLIP_BOUND


def prepare_splits(
    features: np.ndarray,
    labels: np.ndarray,
    ratios: Tuple[float, float, float],
    seed: int,
    classes: Optional[int] = None,
) -> Tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    """Split, fit stats on train, and preprocess all three splits."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise DimensionError(f"features must be 2-d, got {features.ndim}-d")
    if classes is None:
        classes = int(labels.max()) + 1
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(
            f"labels outside [0, {classes}): "
            f"range [{labels.min()}, {labels.max()}]"
        )

    idx = split_indices(features.shape[0], ratios, seed)
    stats = standardize_fit(features[idx[0]])
    out = []
    for tag, rows in zip(("train", "val", "test"), idx):
        out.append(
            FeatureDataset(
                features=preprocess(features[rows], stats),
                labels=labels[rows],
                onehot=one_hot(labels[rows], classes),
                classes=classes,
                tag=tag,
                stats=stats,
            )
        )
    return tuple(out)
