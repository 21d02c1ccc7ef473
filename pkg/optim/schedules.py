"""Learning-rate schedules."""

from __future__ import annotations

import bisect
import math
from collections.abc import Sequence

from utils.errors import ConfigError, ContractError


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float = 0.0) -> float:
    if total <= 0:
        raise ConfigError(f"cosine schedule needs a positive step count, got {total}")
    if not 0 <= t <= total:
        raise ContractError(f"step {t} outside [0, {total}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total))


def multistep_lr(epoch: int, milestones: Sequence[int], factor: float, lr0: float) -> float:
    if factor <= 0:
        raise ConfigError(f"multistep factor must be positive, got {factor}")
    passed = bisect.bisect_right(sorted(milestones), epoch)
    return lr0 * factor**passed


class LRSchedule:
    """Learning rate for (epoch, step) within one training round.

    Cosine annealing runs over all steps of the round; multistep decays at
    epoch milestones; constant keeps the base rate.
    """

    def __init__(self, policy, steps_per_epoch: int):
        self.policy = policy
        self.steps_per_epoch = max(1, steps_per_epoch)
        self.total_steps = policy.epochs * self.steps_per_epoch

    def __call__(self, epoch: int, step: int) -> float:
        p = self.policy
        if p.schedule == "cosine":
            return cosine_lr(epoch * self.steps_per_epoch + step, self.total_steps, p.base_lr, p.lr_min)
        if p.schedule == "multistep":
            return multistep_lr(epoch, p.milestones, p.factor, p.base_lr)
        return p.base_lr
