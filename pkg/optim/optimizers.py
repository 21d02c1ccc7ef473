"""SGD with momentum and Adam, both with coupled l2 regularization.

The l2 term is added to the gradient (g + lambda * w), which equals adding
0.5 * lambda * ||w||^2 to the loss. Optimizer state is created fresh for
every training round.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from fnmatch import fnmatch

import numpy as np

from autodiff import Tensor
from utils.errors import ConfigError, DimensionError


def _check_shapes(**arrays: np.ndarray) -> None:
    shapes = {name: np.shape(a) for name, a in arrays.items()}
    if len(set(shapes.values())) > 1:
        raise DimensionError(f"optimizer operands differ in shape: {shapes}")


def sgd_momentum_step(param, grad, velocity, lr: float, beta: float, l2: float):
    """Return (param', velocity') with v' = beta v + g + l2 w, w' = w - lr v'."""
    _check_shapes(param=param, grad=grad, velocity=velocity)
    g = grad + l2 * param
    velocity = beta * velocity + g
    return param - lr * velocity, velocity


def adam_step(param, grad, m, v, t: int, lr: float, beta1: float, beta2: float, eps: float, l2: float):
    """Return (param', m', v') for bias-corrected Adam at step t >= 1."""
    _check_shapes(param=param, grad=grad, m=m, v=v)
    if t < 1:
        raise ConfigError(f"adam step counter must start at 1, got {t}")
    g = grad + l2 * param
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Optimizer(ABC):
    """Owns per-parameter state and updates parameter tensors in place."""

    def __init__(self, params: Mapping[str, Tensor], l2: float, decay_exclude: Sequence[str] = ()):
        if l2 < 0:
            raise ConfigError(f"l2 weight must be non-negative, got {l2}")
        self.params = params
        self.l2 = l2
        self.decay = {
            name: 0.0 if any(fnmatch(name, pat) for pat in decay_exclude) else l2
            for name in params
        }

    @abstractmethod
    def step(self, grads: Mapping[str, np.ndarray], lr: float) -> None:
        """Apply one update using ``grads`` (already masked)."""

    @abstractmethod
    def state(self) -> dict[str, dict[str, np.ndarray]]:
        """Per-slot state arrays keyed by parameter name."""

    def apply_mask(self, masks: Mapping[str, np.ndarray]) -> None:
        """Zero every state entry at a masked-out coordinate."""
        for slot in self.state().values():
            for name, mask in masks.items():
                if name in slot:
                    slot[name] *= mask


class SGDMomentum(Optimizer):
    def __init__(self, params, l2: float, momentum: float = 0.9, decay_exclude: Sequence[str] = ()):
        super().__init__(params, l2, decay_exclude)
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads, lr):
        for name, t in self.params.items():
            t.data[...], self.velocity[name] = sgd_momentum_step(
                t.data, grads[name], self.velocity[name], lr, self.momentum, self.decay[name]
            )

    def state(self):
        return {"velocity": self.velocity}


class Adam(Optimizer):
    def __init__(
        self,
        params,
        l2: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        decay_exclude: Sequence[str] = (),
    ):
        super().__init__(params, l2, decay_exclude)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads, lr):
        self.t += 1
        for name, t in self.params.items():
            t.data[...], self.m[name], self.v[name] = adam_step(
                t.data, grads[name], self.m[name], self.v[name], self.t,
                lr, self.beta1, self.beta2, self.eps, self.decay[name],
            )

    def state(self):
        return {"m": self.m, "v": self.v}


def build_optimizer(policy, params: Mapping[str, Tensor]) -> Optimizer:
    if policy.optimizer == "sgd-momentum":
        return SGDMomentum(params, policy.l2, policy.momentum, policy.decay_exclude)
    return Adam(params, policy.l2, policy.adam_beta1, policy.adam_beta2, policy.adam_eps, policy.decay_exclude)
