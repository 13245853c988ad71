"""Reverse-mode automatic differentiation over numpy float64 arrays.

A Tensor records its parents and a backward closure; ``backward()`` walks the
graph once in reverse topological order. The op set is exactly what the
encoder and the losses need, nothing more. Conventions that matter for
gradient checking:

- relu and the hinge use subgradient 0 at the kink (strict ``x > 0`` mask),
- safe_sqrt defines gradient 0 at 0,
- max/min selections route gradient to the first attaining entry.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # ndarray OP Tensor must defer to Tensor's reflected operator, not coerce
    __array_priority__ = 1000

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward=None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        if self.data.ndim != 0:
            raise ValueError("backward() expects a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to the given shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out_data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ grad)

    return Tensor(out_data, parents=(a, b), backward=backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        a._accumulate(grad.T)

    return Tensor(a.data.T, parents=(a,), backward=backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(grad):
        a._accumulate(grad.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out_data, parents=(a,), backward=backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(grad):
        a._accumulate(grad * (1.0 - out_data * out_data))

    return Tensor(out_data, parents=(a,), backward=backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(grad):
        a._accumulate(grad * mask)

    return Tensor(np.where(mask, a.data, 0.0), parents=(a,), backward=backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(grad):
        a._accumulate(grad * out_data)

    return Tensor(out_data, parents=(a,), backward=backward)


def safe_sqrt(a) -> Tensor:
    """Square root with gradient 0 at 0 (a subgradient convention, like relu)."""
    a = as_tensor(a)
    out_data = np.sqrt(np.maximum(a.data, 0.0))

    def backward(grad):
        g = np.where(out_data > 0, 0.5 / np.where(out_data > 0, out_data, 1.0), 0.0)
        a._accumulate(grad * g)

    return Tensor(out_data, parents=(a,), backward=backward)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), stable for large |x|; gradient is the logistic sigmoid."""
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def backward(grad):
        a._accumulate(grad / (1.0 + np.exp(-a.data)))

    return Tensor(out_data, parents=(a,), backward=backward)


def take_rows(a, index) -> Tensor:
    """Select rows of a 2-D tensor; duplicate indices accumulate on backward."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(grad):
        g = np.zeros_like(a.data)
        np.add.at(g, index, grad)
        a._accumulate(g)

    return Tensor(a.data[index], parents=(a,), backward=backward)


def take_at(a, rows, cols) -> Tensor:
    """Gather entries a[rows[i], cols[i]] into a vector."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def backward(grad):
        g = np.zeros_like(a.data)
        np.add.at(g, (rows, cols), grad)
        a._accumulate(g)

    return Tensor(a.data[rows, cols], parents=(a,), backward=backward)


def max_where(a, mask, axis: int) -> Tensor:
    """Max over entries where mask is True; gradient goes to the first argmax.

    Every slice along the axis must contain at least one True entry.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=axis).all():
        raise ValueError("max_where: some slice has no valid entries")
    masked = np.where(mask, a.data, -np.inf)
    out_data = masked.max(axis=axis)
    argmax = masked.argmax(axis=axis)

    def backward(grad):
        g = np.zeros_like(a.data)
        idx = list(np.indices(out_data.shape))
        idx.insert(axis, argmax)
        g[tuple(idx)] = grad
        a._accumulate(g)

    return Tensor(out_data, parents=(a,), backward=backward)


def min_where(a, mask, axis: int) -> Tensor:
    return -max_where(-as_tensor(a), mask, axis)


def hinge(x) -> Tensor:
    """[x]_+ with subgradient 0 at the kink."""
    return relu(x)
