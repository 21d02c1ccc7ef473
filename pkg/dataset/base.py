"""Immutable labelled image sets and per-channel normalization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from utils.errors import DimensionError, LabelIndexError

SPLITS = ("train", "val", "test")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    source_index: np.ndarray | None = None
    mean: np.ndarray | None = field(default=None, repr=False)
    std: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise DimensionError(f"images must be N x C x H x W, got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise DimensionError(f"{labels.shape[0]} labels for {images.shape[0]} images")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelIndexError(f"labels must lie in [0, {self.num_classes})")
        index = np.arange(len(labels)) if self.source_index is None else np.asarray(self.source_index, dtype=np.int64)
        object.__setattr__(self, "images", _frozen(images))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "source_index", _frozen(index))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def take(self, indices, split: str | None = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            images=self.images[indices],
            labels=self.labels[indices],
            source_index=self.source_index[indices],
            split=split or self.split,
        )

    def with_labels(self, labels) -> "Dataset":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def channel_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel mean and std over all pixels (float64)."""
        x = self.images.astype(np.float64)
        mean = x.mean(axis=(0, 2, 3))
        std = x.std(axis=(0, 2, 3))
        return mean, np.where(std > 0, std, 1.0)

    def normalized(self, mean: np.ndarray, std: np.ndarray) -> "Dataset":
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        x = (self.images - mean[None, :, None, None]) / std[None, :, None, None]
        return replace(self, images=x.astype(np.float32), mean=mean, std=std)
