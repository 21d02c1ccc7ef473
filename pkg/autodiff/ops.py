"""Differentiable operations.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input (``None`` for inputs that
are constants). Broadcasting follows numpy; gradients are summed back to the
input shapes.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from autodiff.tensor import Tensor, record
from utils.errors import DimensionError, LabelIndexError

GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715
LAYER_NORM_EPS = 1e-5


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcast to reach its shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


# ----- elementwise arithmetic -----

def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"add: cannot broadcast {a.shape} and {b.shape}") from e

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record("add", out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise DimensionError(f"sub: cannot broadcast {a.shape} and {b.shape}") from e

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record("sub", out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"mul: cannot broadcast {a.shape} and {b.shape}") from e

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return record("mul", out, (a, b), backward)


# ----- linear algebra and shape -----

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the two trailing axes, batching over the rest."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs at least 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"matmul batch extents differ: {a.shape} x {b.shape}") from e

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return record("matmul", out, (a, b), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {a.shape} to {tuple(shape)}") from e
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    _check_axis(a, axis1)
    _check_axis(a, axis2)
    out = np.swapaxes(a.data, axis1, axis2)
    return record("swapaxes", out, (a,), lambda g: (np.swapaxes(g, axis1, axis2),))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = np.broadcast_to(a.data, tuple(shape)).copy()
    except ValueError as e:
        raise DimensionError(f"cannot broadcast {a.shape} to {tuple(shape)}") from e
    return record("broadcast_to", out, (a,), lambda g: (unbroadcast(g, a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tensors, backward)


def take(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Select one position along ``axis`` (the axis is removed)."""
    axis = _check_axis(a, axis)
    if not -a.shape[axis] <= index < a.shape[axis]:
        raise DimensionError(f"index {index} out of range for axis {axis} of {a.shape}")
    out = np.take(a.data, index, axis=axis)

    def backward(g):
        full = np.zeros_like(a.data)
        slicer = [slice(None)] * a.ndim
        slicer[axis] = index
        full[tuple(slicer)] = g
        return (full,)

    return record("take", out, (a,), backward)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record("sum", out, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ----- nonlinearities -----

def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return record("relu", out, (x,), lambda g: (g * (x.data > 0),))


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    u = x.data
    t = np.tanh(GELU_C * (u + GELU_K * u**3))
    out = 0.5 * u * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
        return (g * (0.5 * (1.0 + t) + 0.5 * u * dt),)

    return record("gelu", out, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis, then scale by gamma and shift by beta."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine extents {gamma.shape}/{beta.shape} do not match last axis {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record("layer_norm", out, (x, gamma, beta), backward)


# ----- loss -----

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [B, K] logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    b, k = logits.shape
    if labels.shape[0] != b:
        raise DimensionError(f"cross_entropy: {labels.shape[0]} labels for batch of {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise LabelIndexError(f"label {bad} outside [0, {k})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(z)
    rows = np.arange(b)
    out = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.dtype)

    def backward(g):
        grad = e / z
        grad[rows, labels] -= 1.0
        return (grad * (g / b),)

    return record("cross_entropy", out, (logits,), backward)
