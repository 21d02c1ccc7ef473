"""Deterministic stratified splits."""

from __future__ import annotations

import numpy as np

from dataset.base import Dataset
from utils.errors import ConfigError


def stratified_indices(labels: np.ndarray, num_classes: int, fraction: float, seed: int) -> np.ndarray:
    """Sorted indices holding round(fraction * n_c) samples of every class c."""
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        k = int(np.floor(fraction * len(members) + 0.5))
        chosen.append(rng.permutation(members)[:k])
    return np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=np.int64)


def split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Carve a class-stratified validation split; both parts keep input order."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    val_idx = stratified_indices(dataset.labels, dataset.num_classes, val_fraction, seed)
    keep = np.ones(len(dataset), dtype=bool)
    keep[val_idx] = False
    return dataset.take(np.flatnonzero(keep), "train"), dataset.take(val_idx, "val")


def stratified_subset(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Reduce a dataset to about n samples, class-balanced, order-preserving."""
    if n >= len(dataset):
        return dataset
    return dataset.take(stratified_indices(dataset.labels, dataset.num_classes, n / len(dataset), seed))
