"""CIFAR-10 / CIFAR-100 binary format readers.

CIFAR-10 records are 3073 bytes: one label byte followed by 3072 pixel bytes
(1024 red, 1024 green, 1024 blue, each plane row-major 32x32). CIFAR-100
records are 3074 bytes: coarse label, fine label, then the same pixel layout;
the fine label is used.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from dataset.base import Dataset
from utils import logger
from utils.errors import FormatError

IMAGE_SHAPE = (3, 32, 32)
PIXELS = 3 * 32 * 32
VARIANTS = {
    "cifar10": {"label_bytes": 1, "label_pos": 0, "num_classes": 10,
                "train": [f"data_batch_{i}.bin" for i in range(1, 6)], "test": ["test_batch.bin"]},
    "cifar100": {"label_bytes": 2, "label_pos": 1, "num_classes": 100,
                 "train": ["train.bin"], "test": ["test.bin"]},
}


def record_size(variant: str) -> int:
    return VARIANTS[variant]["label_bytes"] + PIXELS


def load_cifar(path, variant: str = "cifar10", split: str = "train") -> Dataset:
    """Read one CIFAR binary batch file into a Dataset scaled to [0, 1]."""
    if variant not in VARIANTS:
        raise FormatError(f"unknown CIFAR variant {variant!r}")
    spec = VARIANTS[variant]
    size = record_size(variant)
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % size:
        complete = len(raw) // size
        raise FormatError(
            f"{path}: length {len(raw)} is not a positive multiple of the {size}-byte {variant} record "
            f"(expected {(complete + 1) * size} bytes for {complete + 1} records)",
            offset=complete * size,
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, size)
    labels = records[:, spec["label_pos"]].astype(np.int64)
    if labels.max() >= spec["num_classes"]:
        bad = int(np.argmax(labels >= spec["num_classes"]))
        raise FormatError(f"{path}: label {labels[bad]} out of range", offset=bad * size + spec["label_pos"])
    images = records[:, spec["label_bytes"]:].reshape(-1, *IMAGE_SHAPE).astype(np.float32) / 255.0
    logger.debug(f"[data] {Path(path).name}: {len(labels)} {variant} records")
    return Dataset(images, labels, spec["num_classes"], split=split)


def load_cifar_dir(directory, variant: str, split: str) -> Dataset:
    """Concatenate the standard batch files of a split found in ``directory``."""
    directory = Path(directory)
    files = [directory / name for name in VARIANTS[variant][split]]
    missing = [str(f) for f in files if not f.exists()]
    if missing:
        raise FileNotFoundError(f"CIFAR files not found: {', '.join(missing)}")
    parts = [load_cifar(f, variant, split) for f in files]
    return Dataset(
        np.concatenate([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        parts[0].num_classes,
        split=split,
    )
