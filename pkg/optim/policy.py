"""Training policy: optimizer, schedule, epochs, batch size and l2 weight."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from utils.errors import ConfigError

OPTIMIZERS = ("sgd-momentum", "adam")
SCHEDULES = ("cosine", "multistep", "constant")


@dataclass(frozen=True)
class TrainPolicy:
    optimizer: str = "adam"
    base_lr: float = 1e-3
    lr_min: float = 0.0
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    schedule: str = "cosine"
    milestones: tuple[int, ...] = ()
    factor: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    l2: float = 0.03
    decay_exclude: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        object.__setattr__(self, "decay_exclude", tuple(self.decay_exclude))
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"train.schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.l2 < 0:
            raise ConfigError(f"train.l2 must be >= 0, got {self.l2}")
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"train.base_lr must be positive, got {self.base_lr}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f"train.milestones must be strictly increasing, got {list(self.milestones)}")
        if self.factor <= 0:
            raise ConfigError(f"train.factor must be positive, got {self.factor}")

    def with_l2(self, l2: float) -> "TrainPolicy":
        return replace(self, l2=l2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["decay_exclude"] = list(self.decay_exclude)
        return d


PRESETS = {
    # Adam 1e-4, cosine annealing, 200 epochs, lambda 0.03
    "vit-cifar10": TrainPolicy(optimizer="adam", base_lr=1e-4, schedule="cosine", epochs=200, batch_size=128, l2=0.03),
    # SGD momentum 0.9, lr 0.1 decayed x0.1 at epochs 80 and 120, 160 epochs, batch 128, lambda 1e-4
    "resnet-cifar10": TrainPolicy(
        optimizer="sgd-momentum", base_lr=0.1, momentum=0.9, schedule="multistep",
        milestones=(80, 120), factor=0.1, epochs=160, batch_size=128, l2=1e-4,
    ),
    "desk": TrainPolicy(optimizer="adam", base_lr=1e-3, schedule="cosine", epochs=10, batch_size=64, l2=0.03),
}
