"""Small reverse-mode autodiff over numpy arrays.

Covers exactly the ops needed by the trainable fusion subgraph and the
consistency losses: elementwise arithmetic with broadcasting, matmul,
axis permutation/reshape, reductions, slicing, exact GELU and softmax.
Values are float64 throughout; backward() runs a topological sweep and
accumulates into .grad on every node that requires gradients.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

__all__ = ["Var", "constant", "parameter", "matmul", "gelu_v", "softmax_v"]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    # -- graph traversal ------------------------------------------------

    def backward(self, seed=None):
        topo: list[Var] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        other = _as_var(other)

        def bw(g):
            _accum(self, _unbroadcast(g, self.shape))
            _accum(other, _unbroadcast(g, other.shape))

        return Var(self.data + other.data, parents=(self, other), backward=bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_var(other)

        def bw(g):
            _accum(self, _unbroadcast(g, self.shape))
            _accum(other, -_unbroadcast(g, other.shape))

        return Var(self.data - other.data, parents=(self, other), backward=bw)

    def __rsub__(self, other):
        return _as_var(other) - self

    def __mul__(self, other):
        other = _as_var(other)

        def bw(g):
            _accum(self, _unbroadcast(g * other.data, self.shape))
            _accum(other, _unbroadcast(g * self.data, other.shape))

        return Var(self.data * other.data, parents=(self, other), backward=bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_var(other)

        def bw(g):
            _accum(self, _unbroadcast(g / other.data, self.shape))
            _accum(other, _unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return Var(self.data / other.data, parents=(self, other), backward=bw)

    def __neg__(self):
        def bw(g):
            _accum(self, -g)

        return Var(-self.data, parents=(self,), backward=bw)

    def __pow__(self, p: float):
        def bw(g):
            _accum(self, g * p * self.data ** (p - 1))

        return Var(self.data**p, parents=(self,), backward=bw)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            _accum(self, full)

        return Var(self.data[key], parents=(self,), backward=bw)

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        old = self.shape

        def bw(g):
            _accum(self, g.reshape(old))

        return Var(self.data.reshape(shape), parents=(self,), backward=bw)

    def swapaxes(self, a: int, b: int):
        def bw(g):
            _accum(self, g.swapaxes(a, b))

        return Var(self.data.swapaxes(a, b), parents=(self,), backward=bw)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def bw(g):
            if axis is None:
                _accum(self, np.broadcast_to(g, self.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(self, np.broadcast_to(g, self.shape).copy())

        return Var(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,), backward=bw)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _accum(node: Var, g: np.ndarray) -> None:
    if node.requires_grad:
        node.grad = node.grad + g


def constant(data) -> Var:
    return Var(data, requires_grad=False)


def parameter(data) -> Var:
    return Var(data, requires_grad=True)


def matmul(a: Var, b: Var) -> Var:
    a, b = _as_var(a), _as_var(b)

    def bw(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        _accum(a, _unbroadcast(ga, a.shape))
        _accum(b, _unbroadcast(gb, b.shape))

    return Var(np.matmul(a.data, b.data), parents=(a, b), backward=bw)


def gelu_v(x: Var) -> Var:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    x = _as_var(x)
    phi_cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * phi_cdf

    def bw(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
        _accum(x, g * (phi_cdf + x.data * pdf))

    return Var(out, parents=(x,), backward=bw)


def softmax_v(x: Var) -> Var:
    """Softmax over the last axis."""
    x = _as_var(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(x, y * (g - dot))

    return Var(y, parents=(x,), backward=bw)
