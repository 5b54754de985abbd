"""Reverse-mode automatic differentiation over numpy float64 arrays.

Every differentiable value is a Tensor. Each op stores a backward closure
that scatters the output gradient to its inputs; Tensor.backward() replays
the recorded closures in reverse topological order. Gradients accumulate
into .grad, so zero them between backward passes.
"""

from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np
from scipy import special as _sp_special


class ContractError(ValueError):
    """An operation was invoked outside its documented contract."""


class ShapeError(ContractError):
    """Operand shapes do not conform."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording inside the block; forwards stay pure numpy."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over the axes numpy broadcast to produce it, back to shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accum(t: "Tensor", g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _record(out: "Tensor", parents: Sequence["Tensor"], backward) -> "Tensor":
    # Tape entries only exist while grads are enabled and some input needs them.
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Tensor:
    """A float64 ndarray plus an optional autodiff tape entry."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    # ---- arithmetic ----

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.data.shape))

        return _record(out, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data)

        def backward(g, a=self):
            if a.requires_grad:
                _accum(a, -g)

        return _record(out, (self,), backward)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.data.shape))

        return _record(out, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _accum(a, _unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return _record(out, (self, other), backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("pow exponent must be a python scalar")
        out = Tensor(self.data ** exponent)

        def backward(g, a=self, p=exponent):
            if a.requires_grad:
                _accum(a, g * p * a.data ** (p - 1))

        return _record(out, (self,), backward)

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ShapeError(
                f"matmul requires ndim >= 2 operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[-1] != other.data.shape[-2]:
            raise ShapeError(
                f"matmul inner dimensions differ: {self.data.shape} @ {other.data.shape}"
            )
        out = Tensor(self.data @ other.data)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _accum(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

        return _record(out, (self, other), backward)

    # ---- elementwise transcendentals ----

    def exp(self):
        out = Tensor(np.exp(self.data))

        def backward(g, a=self, y=out.data):
            if a.requires_grad:
                _accum(a, g * y)

        return _record(out, (self,), backward)

    def log(self):
        out = Tensor(np.log(self.data))

        def backward(g, a=self):
            if a.requires_grad:
                _accum(a, g / a.data)

        return _record(out, (self,), backward)

    def sqrt(self):
        out = Tensor(np.sqrt(self.data))

        def backward(g, a=self, y=out.data):
            if a.requires_grad:
                _accum(a, g * 0.5 / y)

        return _record(out, (self,), backward)

    def tanh(self):
        out = Tensor(np.tanh(self.data))

        def backward(g, a=self, y=out.data):
            if a.requires_grad:
                _accum(a, g * (1.0 - y * y))

        return _record(out, (self,), backward)

    def erf(self):
        out = Tensor(_sp_special.erf(self.data))
        c = 2.0 / np.sqrt(np.pi)

        def backward(g, a=self, c=c):
            if a.requires_grad:
                _accum(a, g * c * np.exp(-a.data * a.data))

        return _record(out, (self,), backward)

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims))

        def backward(g, a=self, axis=axis, keepdims=keepdims):
            if not a.requires_grad:
                return
            if axis is None:
                _accum(a, np.broadcast_to(g, a.data.shape).copy())
                return
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                axes = tuple(ax % a.data.ndim for ax in axes)
                g = np.expand_dims(g, axes)
            _accum(a, np.broadcast_to(g, a.data.shape).copy())

        return _record(out, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else _axis_count(self.data.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ---- shape manipulation ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape))

        def backward(g, a=self):
            if a.requires_grad:
                _accum(a, g.reshape(a.data.shape))

        return _record(out, (self,), backward)

    def swapaxes(self, ax1: int, ax2: int):
        out = Tensor(self.data.swapaxes(ax1, ax2))

        def backward(g, a=self, ax1=ax1, ax2=ax2):
            if a.requires_grad:
                _accum(a, g.swapaxes(ax1, ax2))

        return _record(out, (self,), backward)

    def broadcast_to(self, shape):
        out = Tensor(np.broadcast_to(self.data, shape).copy())

        def backward(g, a=self):
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.data.shape))

        return _record(out, (self,), backward)

    def __getitem__(self, idx):
        out = Tensor(self.data[idx])

        def backward(g, a=self, idx=idx):
            if a.requires_grad:
                scat = np.zeros_like(a.data)
                np.add.at(scat, idx, g)
                _accum(a, scat)

        return _record(out, (self,), backward)

    # ---- clipping ----

    def clip(self, lo: float, hi: float):
        out = Tensor(np.clip(self.data, lo, hi))

        def backward(g, a=self, lo=lo, hi=hi):
            if a.requires_grad:
                inside = (a.data >= lo) & (a.data <= hi)
                _accum(a, g * inside)

        return _record(out, (self,), backward)


def _raise_item(t: Tensor):
    raise ContractError(f"item() requires a single-element tensor, got shape {t.data.shape}")


def _axis_count(shape: tuple, axis) -> int:
    axes = axis if isinstance(axis, tuple) else (axis,)
    n = 1
    for ax in axes:
        n *= shape[ax]
    return n


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor):
    """Backprop from a scalar loss through the recorded graph."""
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not require grad; nothing to backprop")

    # Iterative topo sort; recursion depth would blow up on long chains.
    topo, visited, stack = [], set(), [(loss, False)]
    while stack:
        node, children_done = stack.pop()
        if children_done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


Tensor.backward = lambda self: backward(self)


# ---- composite ops ----


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = Tensor(np.minimum(a.data, b.data))

    def bwd(g, a=a, b=b, take_a=take_a):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _record(out, (a, b), bwd)


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    out = Tensor(np.maximum(a.data, b.data))

    def bwd(g, a=a, b=b, take_a=take_a):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _record(out, (a, b), bwd)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, tensors=tensors, offsets=offsets, axis=axis):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _record(out, tuple(tensors), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else axis + t.data.ndim + 1, 1)
        expanded.append(t.reshape(shape))
    return concatenate(expanded, axis=axis)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-invariant softmax; the max shift is a constant, which is exact."""
    x = as_tensor(x)
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x) via erf."""
    x = as_tensor(x)
    return x * 0.5 * ((x * (1.0 / np.sqrt(2.0))).erf() + 1.0)
