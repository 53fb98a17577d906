"""Dense float64 tensors with reverse-mode differentiation.

Every primitive records a `Node` on the output tensor holding its inputs and a
closure mapping the output gradient to input gradients. `backward()` builds a
`Tape` (the topologically ordered nodes reachable from the loss) and replays it
in reverse, visiting each node once and summing gradients over shared paths.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from app.core.exceptions import ContractError, DimensionError, NumericError

logger = structlog.get_logger()

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_node_counter = itertools.count()
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate primitives without recording nodes."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@dataclass(eq=False)
class Node:
    """One recorded primitive application."""

    op: str
    inputs: Tuple["Tensor", ...]
    grad_fn: GradFn
    order: int = field(default_factory=lambda: next(_node_counter))


class Tensor:
    """A float64 array that may participate in gradient computation."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        node: Optional[Node] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node = node
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def grad_or_zeros(self) -> np.ndarray:
        return np.zeros_like(self.data) if self.grad is None else self.grad

    def detach(self) -> "Tensor":
        return stop_gradient(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar over the primitives below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other: float):
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(out: np.ndarray, op: str, inputs: Sequence[Tensor], grad_fn: GradFn) -> Tensor:
    requires = _grad_enabled.get() and any(t.requires_grad for t in inputs)
    node = Node(op=op, inputs=tuple(inputs), grad_fn=grad_fn) if requires else None
    return Tensor(out, requires_grad=requires, node=node)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast",
            error_code="shape_mismatch",
        )


# Primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m×k] and b [k×n]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: cannot multiply {a.shape} by {b.shape}",
            error_code="shape_mismatch",
        )

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, "matmul", (a, b), grad_fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, "add", (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, "sub", (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, "mul", (a, b), grad_fn)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0

    def grad_fn(g):
        return (g * active,)

    return _record(np.where(active, x.data, 0.0), "relu", (x,), grad_fn)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along `axis` to unit Euclidean norm."""
    x = as_tensor(x)
    norm = np.maximum(np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True)), eps)
    y = x.data / norm

    def grad_fn(g):
        return ((g - y * np.sum(g * y, axis=axis, keepdims=True)) / norm,)

    return _record(y, "l2_normalize", (x,), grad_fn)


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Normalized log-probabilities, stabilized by max subtraction."""
    logits = as_tensor(logits)
    if logits.data.size == 0:
        raise DimensionError("log_softmax: empty input", error_code="empty")
    if np.isnan(logits.data).any():
        raise NumericError("log_softmax: NaN in logits", error_code="nan")
    shifted = logits.data - np.max(logits.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def grad_fn(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return _record(out, "log_softmax", (logits,), grad_fn)


def gather(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Select rows by index; repeated indices accumulate on the way back."""
    x = as_tensor(x)
    if axis != 0:
        raise ContractError("gather: only axis 0 is supported", error_code="axis")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -x.shape[0] or idx.max() >= x.shape[0]):
        raise DimensionError(
            f"gather: index out of range for shape {x.shape}", error_code="index"
        )

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(x.data[idx], "gather", (x,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}", error_code="shape_mismatch")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, "concat", tensors, grad_fn)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}", error_code="shape_mismatch")

    def grad_fn(g):
        return (g.reshape(x.shape),)

    return _record(out, "reshape", (x,), grad_fn)


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose: expected 2-d, got {x.shape}", error_code="shape_mismatch")

    def grad_fn(g):
        return (g.T,)

    return _record(x.data.T, "transpose", (x,), grad_fn)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(np.sum(x.data, axis=axis, keepdims=keepdims), "sum", (x,), grad_fn)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def stop_gradient(x: Tensor) -> Tensor:
    """Value-identical copy that blocks gradient flow (sg[.])."""
    x = as_tensor(x)
    return Tensor(x.data, requires_grad=False, name=x.name)


# Backward pass


class Tape:
    """Topologically ordered record of the nodes a loss depends on."""

    def __init__(self, nodes: List[Tuple[Tensor, Node]]):
        self.entries = nodes

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Tape":
        seen = set()
        entries: List[Tuple[Tensor, Node]] = []
        stack = [loss]
        while stack:
            tensor = stack.pop()
            node = tensor.node
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            entries.append((tensor, node))
            stack.extend(t for t in node.inputs if t.requires_grad)
        # Node order is creation order, so inputs always precede outputs
        entries.sort(key=lambda entry: entry[1].order)
        return cls(entries)


def backward(loss: Tensor) -> Tape:
    """Accumulate d(loss)/d(t) into `t.grad` for every tensor that requires it."""
    if loss.ndim != 0:
        raise ContractError(
            f"backward: loss must be a scalar, got shape {loss.shape}",
            error_code="non_scalar",
        )
    if not np.isfinite(loss.data):
        raise NumericError(f"backward: non-finite loss {loss.item()}", error_code="nan_loss")

    tape = Tape.from_loss(loss)
    if not loss.requires_grad:
        logger.debug("Backward on a loss with no trainable ancestors")
        return tape

    pending = {id(loss): np.ones_like(loss.data)}
    leaves: dict = {}
    for tensor, node in reversed(tape.entries):
        g = pending.pop(id(tensor), None)
        if g is None:
            continue
        tensor.grad = g
        for inp, inp_grad in zip(node.inputs, node.grad_fn(g)):
            if inp_grad is None or not inp.requires_grad:
                continue
            key = id(inp)
            if inp.node is None:
                leaves[key] = (inp, leaves[key][1] + inp_grad if key in leaves else inp_grad)
            else:
                pending[key] = pending[key] + inp_grad if key in pending else inp_grad

    for leaf, g in leaves.values():
        if not np.all(np.isfinite(g)):
            raise NumericError(
                f"backward: non-finite gradient for {leaf.name or leaf.shape}",
                error_code="nan_grad",
            )
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    return tape
