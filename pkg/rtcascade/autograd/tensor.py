"""
Reverse-mode automatic differentiation on numpy arrays.

A `Tensor` wraps an n-dimensional numpy array. Operations in `rtcascade.autograd.ops`,
`rtcascade.autograd.conv` and `rtcascade.autograd.resample` return new tensors that
carry a `ComputationRecord` pointing at their parents and a rule that maps the output
gradient to one gradient contribution per parent. `Tensor.backward` walks the records
in reverse topological order and accumulates into the `grad` slot of every leaf that
requires a gradient.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np

from rtcascade.core.exc import DimensionError

_DEFAULT_DTYPE: contextvars.ContextVar[np.dtype] = contextvars.ContextVar(
    "rtcascade_default_dtype", default=np.dtype(np.float32)
)
_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "rtcascade_grad_enabled", default=True
)

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@contextlib.contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    """Select the dtype used for tensors built from non floating-point data."""
    token = _DEFAULT_DTYPE.set(np.dtype(dtype))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate operations without recording computation records."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


@dataclass(eq=False)
class ComputationRecord:
    """How a tensor was produced: the op, its inputs, and the gradient rule."""

    op_name: str
    parents: tuple["Tensor", ...]
    backward: BackwardRule


class Tensor:
    """An n-dimensional real array with an optional gradient slot."""

    def __init__(
        self: "Tensor",
        data: Any,
        requires_grad: bool = False,
        node: Optional[ComputationRecord] = None,
    ) -> None:
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(get_default_dtype())
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node = node

    def __repr__(self: "Tensor") -> str:
        op = self.node.op_name if self.node is not None else "leaf"
        return (
            f"Tensor(shape={self.shape}, op={op}, "
            f"requires_grad={self.requires_grad})"
        )

    @property
    def shape(self: "Tensor") -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self: "Tensor") -> int:
        return self.data.ndim

    @property
    def size(self: "Tensor") -> int:
        return int(self.data.size)

    @property
    def dtype(self: "Tensor") -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self: "Tensor") -> bool:
        return self.node is None

    def numpy(self: "Tensor") -> np.ndarray:
        return self.data

    def item(self: "Tensor") -> float:
        if self.size != 1:
            raise DimensionError(
                f"item() needs a single element, shape is {self.shape}"
            )
        return float(self.data.reshape(-1)[0])

    def detach(self: "Tensor") -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self: "Tensor") -> None:
        self.grad = None

    def backward(self: "Tensor", grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into the `grad` slot of every reachable leaf.

        Calling this twice without resetting the leaves doubles their gradients.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.size != 1:
                raise DimensionError(
                    f"backward() without a seed needs a scalar, shape is {self.shape}"
                )
            grad = np.ones_like(self.data)
        elif tuple(np.shape(grad)) != self.shape:
            raise DimensionError(
                f"Seed gradient shape {np.shape(grad)} != tensor shape {self.shape}"
            )
        pending = {id(self): np.asarray(grad, dtype=self.dtype)}
        for tensor in reversed(topological_order(self)):
            g = pending.pop(id(tensor), None)
            if g is None:
                continue
            if tensor.node is None:
                tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
                continue
            contributions = tensor.node.backward(g)
            for parent, contribution in zip(tensor.node.parents, contributions):
                if contribution is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + contribution
                else:
                    pending[key] = contribution

    # operator sugar, resolved lazily to keep ops importing from this module
    def __add__(self: "Tensor", other: Any) -> "Tensor":
        from rtcascade.autograd import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    def __radd__(self: "Tensor", other: Any) -> "Tensor":
        return self.__add__(other)

    def __sub__(self: "Tensor", other: Any) -> "Tensor":
        from rtcascade.autograd import ops

        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_scalar(self, -float(other))

    def __rsub__(self: "Tensor", other: Any) -> "Tensor":
        from rtcascade.autograd import ops

        return ops.add_scalar(ops.mul_scalar(self, -1.0), float(other))

    def __mul__(self: "Tensor", other: Any) -> "Tensor":
        from rtcascade.autograd import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.mul_scalar(self, float(other))

    def __rmul__(self: "Tensor", other: Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self: "Tensor", other: Any) -> "Tensor":
        from rtcascade.autograd import ops

        if isinstance(other, Tensor):
            return ops.div(self, other)
        return ops.mul_scalar(self, 1.0 / float(other))

    def __neg__(self: "Tensor") -> "Tensor":
        from rtcascade.autograd import ops

        return ops.mul_scalar(self, -1.0)

    def __matmul__(self: "Tensor", other: "Tensor") -> "Tensor":
        from rtcascade.autograd import ops

        return ops.matmul(self, other)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op_name: str,
    backward: BackwardRule,
) -> Tensor:
    """Wrap `data` as the output of `op_name`, recording a node only when needed."""
    requires = is_grad_enabled() and any(p.requires_grad for p in parents)
    node = ComputationRecord(op_name, tuple(parents), backward) if requires else None
    return Tensor(data, requires_grad=requires, node=node)


def topological_order(root: Tensor) -> list[Tensor]:
    """Tensors reachable from `root`, every tensor listed after all of its parents."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order
