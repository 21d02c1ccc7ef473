"""Class-conditional synthetic images for desk-scale runs."""

from __future__ import annotations

import numpy as np

from dataset.base import Dataset
from utils.errors import ConfigError


def make_synthetic(
    num_classes: int,
    n: int,
    height: int,
    width: int,
    class_signal: float = 1.0,
    noise_std: float = 1.0,
    seed: int = 0,
    channels: int = 3,
    split: str = "train",
) -> Dataset:
    """Per-class +/-1 template scaled by ``class_signal`` plus Gaussian noise.

    Classes are balanced (label i % K, then shuffled); with ``noise_std=0``
    every image equals its class template.
    """
    if num_classes < 2:
        raise ConfigError(f"synthetic data needs at least 2 classes, got {num_classes}")
    if n < 1:
        raise ConfigError(f"synthetic data needs at least one sample, got {n}")
    rng = np.random.default_rng(seed)
    shape = (channels, height, width)
    templates = rng.choice(np.array([-1.0, 1.0]), size=(num_classes, *shape))
    while len(np.unique(templates.reshape(num_classes, -1), axis=0)) < num_classes:
        templates = rng.choice(np.array([-1.0, 1.0]), size=(num_classes, *shape))

    labels = rng.permutation(np.arange(n) % num_classes)
    images = class_signal * templates[labels] + noise_std * rng.standard_normal((n, *shape))
    return Dataset(images.astype(np.float32), labels, num_classes, split=split)


def class_templates(dataset: Dataset) -> np.ndarray:
    """Mean image per class (the template when the data is noise-free)."""
    return np.stack([dataset.images[dataset.labels == c].mean(axis=0) for c in range(dataset.num_classes)])
