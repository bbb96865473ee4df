"""Reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for the deconstruction policy: broadcasting
arithmetic, (batched) matmul, a few elementwise nonlinearities, axis
reductions, indexing, and concatenation. Every op records a backward
closure on the output node; Tensor.backward() replays them in reverse
topological order and accumulates into .grad on tensors that require
gradients.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager: ops inside build no graph."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward = None

    # -- graph plumbing ------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = _ensure(other)
        out = _node(self.data + other.data, (self, other))
        if out.requires_grad:
            def back():
                self._accum(out.grad)
                other._accum(out.grad)
            out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-_ensure(other))

    def __rsub__(self, other):
        return _ensure(other) + (-self)

    def __mul__(self, other):
        other = _ensure(other)
        out = _node(self.data * other.data, (self, other))
        if out.requires_grad:
            def back():
                self._accum(out.grad * other.data)
                other._accum(out.grad * self.data)
            out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure(other)
        out = _node(self.data / other.data, (self, other))
        if out.requires_grad:
            def back():
                self._accum(out.grad / other.data)
                other._accum(-out.grad * self.data / (other.data * other.data))
            out._backward = back
        return out

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __pow__(self, p: float):
        out = _node(self.data ** p, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = _ensure(other)
        out = _node(self.data @ other.data, (self, other))
        if out.requires_grad:
            def back():
                g = out.grad
                self._accum(g @ np.swapaxes(other.data, -1, -2))
                other._accum(np.swapaxes(self.data, -1, -2) @ g)
            out._backward = back
        return out

    # -- elementwise ---------------------------------------------------

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * (self.data > 0))
        return out

    def tanh(self):
        out = _node(np.tanh(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * (1.0 - out.data * out.data))
        return out

    def sigmoid(self):
        out = _node(1.0 / (1.0 + np.exp(-self.data)), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * out.data * (1.0 - out.data))
        return out

    def exp(self):
        out = _node(np.exp(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * out.data)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad / self.data)
        return out

    def sqrt(self):
        out = _node(np.sqrt(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * 0.5 / out.data)
        return out

    # -- reductions and shape ------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def back():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            out._backward = back
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            scale = self.data.size
        else:
            scale = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / scale)

    def reshape(self, *shape):
        out = _node(self.data.reshape(*shape), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        out = _node(self.data.transpose(*axes), (self,))
        if out.requires_grad:
            inv = np.argsort(axes)
            out._backward = lambda: self._accum(out.grad.transpose(*inv))
        return out

    def swapaxes(self, a: int, b: int):
        out = _node(np.swapaxes(self.data, a, b), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(np.swapaxes(out.grad, a, b))
        return out

    def __getitem__(self, key):
        out = _node(self.data[key], (self,))
        if out.requires_grad:
            fancy = isinstance(key, np.ndarray) or (
                isinstance(key, tuple)
                and any(isinstance(k, (np.ndarray, list)) for k in key)
            ) or isinstance(key, list)
            def back():
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                if fancy:
                    # gather indices may repeat rows
                    np.add.at(self.grad, key, out.grad)
                else:
                    self.grad[key] += out.grad
            out._backward = back
        return out


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def back():
            for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
                t._accum(g)
        out._backward = back
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    # the max shift is a constant: its subgradient cancels exactly
    m = Tensor(x.data.max(axis=axis, keepdims=True))
    z = x - m
    return z - z.exp().sum(axis=axis, keepdims=True).log()


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - m).exp()
    return e / e.sum(axis=axis, keepdims=True)
