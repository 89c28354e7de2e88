"""Reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient and a closure that
pushes incoming gradients to its parents. Graphs are built eagerly by the
op functions and traversed once, iteratively, by backward(). Compute dtype
follows the data (float32 in production, float64 for gradient checks).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap ndarrays, not Tensors")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self) -> np.ndarray:
        return self.data

    def backward(self):
        if self.data.size != 1:
            raise DimensionError("backward() starts from a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- elementwise graph ops ----

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def sum(self):
        return tsum(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.grad is not None})"


def make_node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Internal: wrap an op result, keeping the tape only if a parent needs it."""
    out = Tensor(data, dtype=data.dtype)
    tracked = [p for p in parents if isinstance(p, Tensor) and p.requires_grad]
    if tracked:
        out.requires_grad = True
        out._parents = tuple(tracked)
        out._backward = backward
    return out


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        data = a.data + b.data

        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g, b.data.shape))

        return make_node(data, (a, b), bw)
    const = np.asarray(b, dtype=a.data.dtype)
    data = a.data + const

    def bwc(g):
        a.accumulate(_unbroadcast(g, a.data.shape))

    return make_node(data, (a,), bwc)


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        data = a.data * b.data

        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g * a.data, b.data.shape))

        return make_node(data, (a, b), bw)
    const = np.asarray(b, dtype=a.data.dtype)
    data = a.data * const

    def bwc(g):
        a.accumulate(_unbroadcast(g * const, a.data.shape))

    return make_node(data, (a,), bwc)


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def bw(g):
        a.accumulate(np.broadcast_to(g, a.data.shape).astype(a.data.dtype))

    return make_node(data, (a,), bw)
