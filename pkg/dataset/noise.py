"""Symmetric label noise and externally supplied noisy labels."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from dataset.base import Dataset
from utils.errors import ConfigError, FormatError, LabelIndexError
from utils.io import atomic_write_text

FLIP_COLUMNS = ["index", "original", "new"]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    epsilon: float
    seed: int
    indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    original: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    new: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    def __len__(self) -> int:
        return int(len(self.indices))

    @property
    def flips(self) -> list[tuple[int, int, int]]:
        return [(int(i), int(o), int(n)) for i, o, n in zip(self.indices, self.original, self.new)]

    def apply(self, labels: np.ndarray) -> np.ndarray:
        out = np.array(labels, dtype=np.int64, copy=True)
        if len(self):
            if not np.array_equal(out[self.indices], self.original):
                raise FormatError("flip record does not match the clean labels it is applied to")
            out[self.indices] = self.new
        return out

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"index": self.indices, "original": self.original, "new": self.new}, columns=FLIP_COLUMNS)

    def save(self, path: Path) -> Path:
        return atomic_write_text(path, self.to_frame().to_csv(index=False, lineterminator="\n"))

    @classmethod
    def load(cls, path: Path, epsilon: float, seed: int) -> "NoiseSpec":
        df = pd.read_csv(path, dtype=np.int64)
        if list(df.columns) != FLIP_COLUMNS:
            raise FormatError(f"{path}: expected columns {FLIP_COLUMNS}, got {list(df.columns)}")
        return cls(epsilon, seed, df["index"].to_numpy(), df["original"].to_numpy(), df["new"].to_numpy())


def flip_count(epsilon: float, n: int) -> int:
    """round(epsilon * n) with halves rounded up."""
    return int(np.floor(epsilon * n + 0.5))


def inject_symmetric_noise(labels, epsilon: float, num_classes: int, seed: int) -> tuple[np.ndarray, NoiseSpec]:
    """Flip exactly round(epsilon * N) labels, each to a uniformly drawn other class."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"noise epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and num_classes < 2:
        raise ConfigError("symmetric noise needs at least 2 classes")
    n_flip = flip_count(epsilon, len(labels))
    if n_flip == 0:
        return labels.copy(), NoiseSpec(epsilon, seed)

    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(len(labels), size=n_flip, replace=False))
    original = labels[indices]
    # offsets 1..K-1 map each label uniformly onto the K-1 other classes
    new = (original + rng.integers(1, num_classes, size=n_flip)) % num_classes
    spec = NoiseSpec(epsilon, seed, indices.astype(np.int64), original, new.astype(np.int64))
    return spec.apply(labels), spec


def labels_hash(labels) -> str:
    return hashlib.sha256(np.ascontiguousarray(labels, dtype="<i8").tobytes()).hexdigest()


def load_external_labels(path, dataset: Dataset) -> np.ndarray:
    """Read `index,label` rows (header optional) and return the dataset's relabelled labels.

    Indices refer to ``dataset.source_index`` (positions in the original
    training set); every one of them must be covered exactly once.
    """
    raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
    if raw.shape[1] != 2:
        raise FormatError(f"{path}: expected 2 columns (index,label), got {raw.shape[1]}")
    if raw.shape[0] and not str(raw.iat[0, 0]).strip().lstrip("-").isdigit():
        raw = raw.iloc[1:]
    try:
        table = raw.apply(lambda col: col.str.strip().astype(np.int64))
    except ValueError as e:
        raise FormatError(f"{path}: non-integer entry ({e})") from e
    table.columns = ["index", "label"]

    dup = table["index"][table["index"].duplicated()]
    if len(dup):
        raise FormatError(f"{path}: duplicate index {int(dup.iloc[0])}")
    bad = table[(table["label"] < 0) | (table["label"] >= dataset.num_classes)]
    if len(bad):
        raise LabelIndexError(f"{path}: label {int(bad['label'].iloc[0])} for index {int(bad['index'].iloc[0])} outside [0, {dataset.num_classes})")

    lookup = pd.Series(table["label"].to_numpy(), index=table["index"].to_numpy())
    missing = np.setdiff1d(dataset.source_index, lookup.index.to_numpy())
    if len(missing):
        raise FormatError(f"{path}: missing index {int(missing[0])} ({len(missing)} training indices uncovered)")
    return lookup.loc[dataset.source_index].to_numpy(dtype=np.int64)
