"""Dense tensors with a reverse-mode differentiation tape.

A ``Tensor`` wraps a numpy array. Every differentiable op that touches a
tensor with ``requires_grad`` records a ``Node`` (op kind, input tensors, a
backward closure over saved activations, and a sequence number). Sequence
numbers grow monotonically, so sorting the nodes reachable from a root by
sequence number yields a topological order; ``backward`` walks that order in
reverse and visits every node exactly once.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Mapping
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass

import numpy as np

from utils.errors import ContractError, NonFiniteError

PRECISIONS = {"single": np.float32, "double": np.float64}

_dtype: ContextVar[type] = ContextVar("sddlab_dtype", default=np.float32)
_grad_enabled: ContextVar[bool] = ContextVar("sddlab_grad_enabled", default=True)
_seq = itertools.count()


def _resolve_dtype(precision) -> type:
    if isinstance(precision, str):
        if precision not in PRECISIONS:
            raise ValueError(f"unknown precision {precision!r}, expected one of {sorted(PRECISIONS)}")
        return PRECISIONS[precision]
    return np.dtype(precision).type


def default_dtype() -> type:
    return _dtype.get()


def set_default_precision(precision) -> None:
    """Set the process-wide default float type ("single" or "double")."""
    _dtype.set(_resolve_dtype(precision))


@contextmanager
def precision(precision):
    """Temporarily create new tensors in the given precision."""
    token = _dtype.set(_resolve_dtype(precision))
    try:
        yield
    finally:
        _dtype.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad():
    """Evaluate without recording tape nodes."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@dataclass(eq=False, slots=True)
class Node:
    op: str
    parents: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]
    seq: int
    out_id: int


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = np.array(data, dtype=dtype or default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out._node = None
        out.name = None
        return out

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tape_id(self) -> int | None:
        return self._node.seq if self._node is not None else None

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # Operators delegate to autodiff.ops so that every op has one definition.
    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from autodiff import ops
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a constant")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        from autodiff import ops
        return ops.swapaxes(self, a, b)

    def sum(self, axis=None, keepdims: bool = False):
        from autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def backward(self) -> dict["Tensor", np.ndarray]:
        return backward(self)


def record(op: str, out: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result, check it is finite, and put it on the tape."""
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced non-finite values")
    needs_grad = grad_enabled() and any(p.requires_grad for p in parents)
    result = Tensor._wrap(out, requires_grad=needs_grad)
    if needs_grad:
        result._node = Node(op, parents, backward_fn, next(_seq), id(result))
    return result


class Tape:
    """Op records reachable from a root, in topological (creation) order."""

    def __init__(self, records: list[Node]):
        self.records = records

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def collect(cls, root: Tensor) -> "Tape":
        seen: set[int] = set()
        nodes: list[Node] = []
        stack = [root]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node.parents)
        nodes.sort(key=lambda n: n.seq)
        return cls(nodes)


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None):
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every leaf requiring it.

    Returns the gradient set: keyed by name when ``params`` is given (zeros
    for parameters the loss does not depend on), otherwise by leaf tensor.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward needs a scalar root, got shape {loss.shape}")
    if loss._node is None:
        raise ContractError("loss is not on the tape (no parameter requires grad)")

    tape = Tape.collect(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}

    for node in reversed(tape.records):
        g_out = grads.pop(node.out_id, None)
        if g_out is None:
            continue
        for parent, g in zip(node.parents, node.backward(g_out)):
            if g is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = g if key not in grads else grads[key] + g
            if parent._node is None:
                leaves[key] = parent

    result: dict[Tensor, np.ndarray] = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        result[leaf] = leaf.grad

    if params is None:
        return result
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
