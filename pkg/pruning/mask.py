"""Unstructured magnitude pruning with persistent binary masks.

Masks only shrink. A masked coordinate is exactly zero in its parameter, in
its gradient and in optimizer state.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from autodiff import Tensor
from utils import logger
from utils.errors import ConfigError, DimensionError, TerminalPruneError

SCOPES = ("global", "per-layer")
ROUNDING = ("cumulative", "surviving")


@dataclass(frozen=True)
class PruneSchedule:
    zeta_iter: float = 0.2
    zeta_end: float = 0.9999
    scope: str = "global"
    rounding: str = "cumulative"

    def __post_init__(self):
        if not 0.0 < self.zeta_iter < 1.0:
            raise ConfigError(f"prune.zeta_iter must lie in (0, 1), got {self.zeta_iter}")
        if not 0.0 < self.zeta_end < 1.0:
            raise ConfigError(f"prune.zeta_end must lie in (0, 1), got {self.zeta_end}")
        if self.scope not in SCOPES:
            raise ConfigError(f"prune.scope must be one of {SCOPES}, got {self.scope!r}")
        if self.rounding not in ROUNDING:
            raise ConfigError(f"prune.rounding must be one of {ROUNDING}, got {self.rounding!r}")

    def nominal_sparsity(self, k: int) -> float:
        return 1.0 - (1.0 - self.zeta_iter) ** k

    def planned_iterations(self) -> int:
        """Smallest k with 1 - (1 - zeta_iter)^k >= zeta_end."""
        k = 0
        while self.nominal_sparsity(k) < self.zeta_end - 1e-12:
            k += 1
        return k

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PruneMask:
    masks: dict[str, np.ndarray]
    rounds: int = 0
    prunable: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.prunable:
            self.prunable = tuple(self.masks)

    @classmethod
    def full(cls, params: Mapping[str, Tensor], prunable: Sequence[str]) -> "PruneMask":
        return cls({name: np.ones(params[name].shape, dtype=np.uint8) for name in prunable}, 0, tuple(prunable))

    @property
    def total(self) -> int:
        return int(sum(m.size for m in self.masks.values()))

    @property
    def survivors(self) -> int:
        return int(sum(int(m.sum()) for m in self.masks.values()))

    def popcounts(self) -> dict[str, int]:
        return {name: int(m.sum()) for name, m in self.masks.items()}

    def copy(self) -> "PruneMask":
        return PruneMask({k: v.copy() for k, v in self.masks.items()}, self.rounds, self.prunable)

    def check_against(self, params: Mapping[str, Tensor]) -> None:
        for name, m in self.masks.items():
            if name not in params:
                raise DimensionError(f"mask names unknown parameter {name!r}")
            if params[name].shape != m.shape:
                raise DimensionError(f"mask {name!r} has shape {m.shape}, parameter has {params[name].shape}")


def _prune_count(zeta_iter: float, alive: int, total: int, rounds: int, rounding: str) -> int:
    if rounding == "surviving":
        return int(math.floor(zeta_iter * alive))
    # cumulative target keeps the pruned count at floor(T (1 - (1 - z)^k))
    target_pruned = int(math.floor(total * (1.0 - (1.0 - zeta_iter) ** (rounds + 1)) + 1e-9))
    return max(0, min(alive, target_pruned - (total - alive)))


def _prune_pool(names: Sequence[str], params, mask: PruneMask, n_prune: int) -> None:
    """Mask the n_prune smallest surviving magnitudes among ``names``.

    Ties break by parameter name, then flat index.
    """
    if n_prune <= 0:
        return
    names = sorted(names)
    mags, owners, coords = [], [], []
    for j, name in enumerate(names):
        alive = np.flatnonzero(mask.masks[name].reshape(-1))
        mags.append(np.abs(params[name].data.reshape(-1)[alive]).astype(np.float64))
        owners.append(np.full(alive.size, j))
        coords.append(alive)
    mags = np.concatenate(mags)
    order = np.argsort(mags, kind="stable")[:n_prune]
    owners = np.concatenate(owners)[order]
    coords = np.concatenate(coords)[order]
    for j, name in enumerate(names):
        hit = coords[owners == j]
        if hit.size:
            mask.masks[name].reshape(-1)[hit] = 0


def magnitude_prune(
    params: Mapping[str, Tensor],
    mask: PruneMask,
    zeta_iter: float,
    scope: str = "global",
    rounding: str = "surviving",
) -> PruneMask:
    """Return a new mask with the smallest surviving weights removed.

    ``rounding="surviving"`` masks floor(zeta_iter * S) of the S survivors;
    ``rounding="cumulative"`` sizes the round so the total pruned count is
    floor(T * (1 - (1 - zeta_iter)^k)) after k rounds. Newly masked weights
    are set to zero in ``params``.
    """
    mask.check_against(params)
    if scope not in SCOPES:
        raise ConfigError(f"unknown pruning scope {scope!r}")
    if mask.survivors == 0:
        raise TerminalPruneError("no surviving prunable weights left to prune")

    new = mask.copy()
    if scope == "global":
        n = _prune_count(zeta_iter, mask.survivors, mask.total, mask.rounds, rounding)
        _prune_pool(list(mask.masks), params, new, n)
    else:
        for name, m in mask.masks.items():
            n = _prune_count(zeta_iter, int(m.sum()), m.size, mask.rounds, rounding)
            _prune_pool([name], params, new, n)
    new.rounds = mask.rounds + 1
    apply_mask(params, new)
    logger.debug(f"[prune] round {new.rounds}: {mask.survivors} -> {new.survivors} survivors")
    return new


def sparsity(mask: PruneMask) -> float:
    """Pruned fraction of the prunable weights of the initial model."""
    total = mask.total
    return 0.0 if total == 0 else (total - mask.survivors) / total


def model_sparsity(params: Mapping[str, Tensor], mask: PruneMask) -> float:
    """Pruned fraction over every parameter, prunable or not."""
    total = sum(t.size for t in params.values())
    return (mask.total - mask.survivors) / total if total else 0.0


def apply_mask(params: Mapping[str, Tensor], mask: PruneMask) -> Mapping[str, Tensor]:
    for name, m in mask.masks.items():
        if params[name].shape != m.shape:
            raise DimensionError(f"mask {name!r} has shape {m.shape}, parameter has {params[name].shape}")
        params[name].data *= m
    return params


def mask_gradients(grads: dict[str, np.ndarray], mask: PruneMask) -> dict[str, np.ndarray]:
    for name, m in mask.masks.items():
        if grads[name].shape != m.shape:
            raise DimensionError(f"mask {name!r} has shape {m.shape}, gradient has {grads[name].shape}")
        grads[name] = grads[name] * m
    return grads


def pack_mask(m: np.ndarray) -> bytes:
    return np.packbits(m.reshape(-1).astype(np.uint8), bitorder="little").tobytes()


def unpack_mask(data: bytes, shape: tuple[int, ...]) -> np.ndarray:
    n = int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little", count=n)
    return bits.reshape(shape).astype(np.uint8)


def surviving_values(params: Mapping[str, Tensor | np.ndarray], mask: PruneMask) -> np.ndarray:
    """Unmasked prunable weight values, in sorted-name then flat-index order, as float64."""
    parts = []
    for name in sorted(mask.masks):
        value = params[name]
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        parts.append(arr.reshape(-1)[mask.masks[name].reshape(-1).astype(bool)].astype(np.float64))
    return np.concatenate(parts) if parts else np.array([], dtype=np.float64)
