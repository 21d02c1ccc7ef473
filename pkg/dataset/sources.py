"""Data sources and the clean -> split -> noisy -> normalized preparation chain."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from dataset.base import Dataset
from dataset.cifar import load_cifar_dir
from dataset.noise import NoiseSpec, inject_symmetric_noise, labels_hash, load_external_labels
from dataset.split import split, stratified_indices, stratified_subset
from dataset.synthetic import make_synthetic
from utils import logger
from utils.errors import ConfigError

KINDS = ("synthetic", "cifar10", "cifar100")


@dataclass(frozen=True)
class DataSpec:
    kind: str = "synthetic"
    path: str | None = None
    external_labels: str | None = None
    val_fraction: float = 0.1
    subset_train: int | None = None
    subset_test: int | None = None
    # synthetic generator
    num_classes: int = 4
    n_train: int = 4000
    n_test: int = 1000
    image_size: int = 32
    channels: int = 3
    class_signal: float = 1.0
    noise_std: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"data.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind != "synthetic" and not self.path:
            raise ConfigError(f"data.path is required for {self.kind}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"data.val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.kind == "synthetic" and self.num_classes < 2:
            raise ConfigError(f"data.num_classes must be >= 2, got {self.num_classes}")

    @property
    def classes(self) -> int:
        return {"cifar10": 10, "cifar100": 100}.get(self.kind, self.num_classes)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        if self.kind == "synthetic":
            return (self.channels, self.image_size, self.image_size)
        return (3, 32, 32)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"noise.epsilon must lie in [0, 1], got {self.epsilon}")

    def to_dict(self) -> dict:
        return asdict(self)


class DataSource(ABC):
    """Abstract base class for every dataset origin."""

    def __init__(self, spec: DataSpec, seed: int):
        self.spec = spec
        self.seed = seed

    @abstractmethod
    def load(self) -> tuple[Dataset, Dataset]:
        """Return the clean (train, test) pair."""

    def run(self) -> tuple[Dataset, Dataset]:
        train, test = self.load()
        if self.spec.subset_train:
            train = stratified_subset(train, self.spec.subset_train, self.seed)
        if self.spec.subset_test:
            test = stratified_subset(test, self.spec.subset_test, self.seed)
        logger.info(f"[data] {self.spec.kind}: {len(train)} train + {len(test)} test, K={train.num_classes}")
        return train, test


class CifarSource(DataSource):
    def load(self):
        return (
            load_cifar_dir(self.spec.path, self.spec.kind, "train"),
            load_cifar_dir(self.spec.path, self.spec.kind, "test"),
        )


class SyntheticSource(DataSource):
    def load(self):
        s = self.spec
        full = make_synthetic(
            s.num_classes, s.n_train + s.n_test, s.image_size, s.image_size,
            s.class_signal, s.noise_std, seed=self.seed, channels=s.channels,
        )
        test_idx = stratified_indices(full.labels, full.num_classes, s.n_test / len(full), self.seed)
        keep = np.ones(len(full), dtype=bool)
        keep[test_idx] = False
        train = full.take(np.flatnonzero(keep), "train")
        # training indices restart at 0 so external label files address them directly
        train = Dataset(train.images, train.labels, train.num_classes, split="train")
        return train, full.take(test_idx, "test")


def build_source(spec: DataSpec, seed: int) -> DataSource:
    if spec.kind == "synthetic":
        return SyntheticSource(spec, seed)
    return CifarSource(spec, seed)


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: Dataset
    val: Dataset
    test: Dataset
    clean_train_labels: np.ndarray
    noise: NoiseSpec
    mean: np.ndarray
    std: np.ndarray

    @property
    def train_labels_hash(self) -> str:
        return labels_hash(self.train.labels)


def prepare_data(spec: DataSpec, noise: NoiseConfig, seed: int, persisted: NoiseSpec | None = None) -> PreparedData:
    """Load, split, inject noise into the training split only, and normalize.

    Normalization constants come from the clean training split. A persisted
    flip record, when given, replaces fresh noise injection.
    """
    train_all, test = build_source(spec, seed).run()
    train, val = split(train_all, spec.val_fraction, seed)
    clean = train.labels.copy()
    noise_seed = seed if noise.seed is None else noise.seed

    if persisted is not None:
        noisy_labels, flips = persisted.apply(clean), persisted
    elif spec.external_labels:
        noisy_labels = load_external_labels(Path(spec.external_labels), train)
        changed = np.flatnonzero(noisy_labels != clean)
        flips = NoiseSpec(noise.epsilon, noise_seed, changed, clean[changed], noisy_labels[changed])
    else:
        noisy_labels, flips = inject_symmetric_noise(clean, noise.epsilon, train.num_classes, noise_seed)
    logger.info(f"[data] {len(flips)} noisy training labels ({len(flips) / max(1, len(train)):.1%})")

    mean, std = train.channel_stats()
    return PreparedData(
        train=train.with_labels(noisy_labels).normalized(mean, std),
        val=val.normalized(mean, std),
        test=test.normalized(mean, std),
        clean_train_labels=clean,
        noise=flips,
        mean=mean,
        std=std,
    )
