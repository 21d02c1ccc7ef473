"""One training round (dense or retraining) and no-grad evaluation."""

from __future__ import annotations

import time
from collections.abc import Iterator
from dataclasses import asdict, dataclass, field

import numpy as np

from autodiff import backward, cross_entropy, no_grad
from dataset.base import Dataset
from model.vit import ViTConfig, ViTParams, vit_forward
from optim import LRSchedule, TrainPolicy, build_optimizer
from pruning.mask import PruneMask, apply_mask, mask_gradients
from utils import logger

EVAL_BATCH = 256


@dataclass(frozen=True)
class EpochStats:
    prune_iter: int
    epoch: int
    train_loss: float
    train_acc: float
    lr: float
    seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    epochs_trained: int = 0
    lr_final: float = 0.0
    history: list[EpochStats] = field(default_factory=list)


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    """Index batches over range(n); shuffled when an RNG is given. The last batch may be short."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(
    config: ViTConfig,
    params: ViTParams,
    data: Dataset,
    policy: TrainPolicy,
    mask: PruneMask | None = None,
    seed: int = 0,
    prune_iter: int = 0,
) -> TrainResult:
    """Train ``params`` in place for ``policy.epochs`` epochs.

    The optimizer and the learning-rate schedule start fresh. With a mask,
    gradients and optimizer state are masked every step so pruned weights
    stay exactly zero.
    """
    optimizer = build_optimizer(policy, params)
    steps_per_epoch = -(-len(data) // policy.batch_size)
    schedule = LRSchedule(policy, steps_per_epoch)
    result = TrainResult()

    for epoch in range(policy.epochs):
        start = time.perf_counter()
        rng = np.random.default_rng([seed, prune_iter, epoch])
        loss_sum, correct, seen, lr = 0.0, 0, 0, policy.base_lr
        for step, idx in enumerate(iterate_batches(len(data), policy.batch_size, rng)):
            for t in params.values():
                t.zero_grad()
            logits = vit_forward(config, params, data.images[idx])
            loss = cross_entropy(logits, data.labels[idx])
            grads = backward(loss, params)
            if mask is not None:
                grads = mask_gradients(grads, mask)
            lr = schedule(epoch, step)
            optimizer.step(grads, lr)
            if mask is not None:
                optimizer.apply_mask(mask.masks)
                apply_mask(params, mask)

            loss_sum += float(loss.item()) * len(idx)
            correct += int((logits.data.argmax(axis=1) == data.labels[idx]).sum())
            seen += len(idx)

        stats = EpochStats(prune_iter, epoch, loss_sum / max(1, seen), correct / max(1, seen), lr,
                           round(time.perf_counter() - start, 3))
        result.history.append(stats)
        result.epochs_trained += 1
        result.lr_final = lr
        logger.debug(
            f"[trainer] iter {prune_iter} epoch {epoch + 1}/{policy.epochs}: "
            f"loss={stats.train_loss:.4f} acc={stats.train_acc:.4f} lr={lr:.3g}"
        )
    return result


def evaluate(config: ViTConfig, params: ViTParams, data: Dataset, batch_size: int = EVAL_BATCH) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) over ``data`` in fixed order."""
    if len(data) == 0:
        return 0.0, 0.0
    loss_sum, correct = 0.0, 0
    with no_grad():
        for idx in iterate_batches(len(data), batch_size):
            logits = vit_forward(config, params, data.images[idx])
            loss_sum += float(cross_entropy(logits, data.labels[idx]).item()) * len(idx)
            correct += int((logits.data.argmax(axis=1) == data.labels[idx]).sum())
    return correct / len(data), loss_sum / len(data)
