"""A small reverse-mode autodiff engine over numpy arrays.

Each :class:`DiffTensor` remembers the op that produced it as a closure
mapping the output gradient to one gradient per parent. ``backward`` walks
the graph once in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class DiffTensor:
    __slots__ = ("value", "grad", "parents", "_vjp", "name")

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self._vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"DiffTensor{label}(shape={self.shape})"

    # operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.value.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.value.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.value)
        order = _topo_order(self)
        for node in order:
            node.grad = None
        self.grad = np.asarray(grad, dtype=self.value.dtype)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node.parents, node._vjp(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def _topo_order(root: DiffTensor) -> list[DiffTensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None) -> DiffTensor:
    if isinstance(x, DiffTensor):
        return x
    return DiffTensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    return DiffTensor(a.value + b.value, (a, b),
                      lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> DiffTensor:
    return DiffTensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return DiffTensor(av * bv, (a, b),
                      lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scale(a: DiffTensor, c: float) -> DiffTensor:
    return DiffTensor(a.value * c, (a,), lambda g: (g * c,))


def matmul(x, w) -> DiffTensor:
    """``x @ w`` for x of shape (..., n) and a 2-D weight w of shape (n, m)."""
    x, w = as_tensor(x), as_tensor(w)
    xv, wv = x.value, w.value
    if wv.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")

    def vjp(g):
        gx = g @ wv.T
        gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return DiffTensor(xv @ wv, (x, w), vjp)


def exp(a: DiffTensor) -> DiffTensor:
    e = np.exp(a.value)
    return DiffTensor(e, (a,), lambda g: (g * e,))


def sigmoid(a: DiffTensor) -> DiffTensor:
    s = 1.0 / (1.0 + np.exp(-a.value))
    return DiffTensor(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a: DiffTensor) -> DiffTensor:
    """x * sigmoid(x)."""
    x = a.value
    s = 1.0 / (1.0 + np.exp(-x))
    return DiffTensor(x * s, (a,), lambda g: (g * (s + x * s * (1.0 - s)),))


def sum_(a: DiffTensor, axis=None, keepdims=False) -> DiffTensor:
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return DiffTensor(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: DiffTensor, axis=None, keepdims=False) -> DiffTensor:
    n = a.value.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a: DiffTensor, shape) -> DiffTensor:
    old = a.shape
    return DiffTensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take(a: DiffTensor, index: np.ndarray, axis: int) -> DiffTensor:
    """Fancy-index ``a`` along ``axis``; repeated indices accumulate gradient."""
    index = np.asarray(index)
    axis = axis % a.value.ndim
    out = np.take(a.value, index, axis=axis)

    def vjp(g):
        ga = np.zeros_like(a.value)
        lead = (slice(None),) * axis
        np.add.at(ga, lead + (index,), g)
        return (ga,)

    return DiffTensor(out, (a,), vjp)


def take_per_row(a: DiffTensor, index: np.ndarray) -> DiffTensor:
    """For a of shape (B, S, L, D) and index (S, L'), out[b, s, j] = a[b, s, index[s, j]]."""
    index = np.asarray(index)
    rows = np.arange(index.shape[0])[:, None]
    out = a.value[:, rows, index, :]

    def vjp(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, (slice(None), rows, index, slice(None)), g)
        return (ga,)

    return DiffTensor(out, (a,), vjp)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def softmax_cross_entropy(logits: DiffTensor, labels: np.ndarray) -> DiffTensor:
    """Mean negative log-likelihood over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits.value)
    b = lp.shape[0]
    loss = -lp[np.arange(b), labels].mean()

    def vjp(g):
        d = np.exp(lp)
        d[np.arange(b), labels] -= 1.0
        return (d * (g / b),)

    return DiffTensor(np.asarray(loss, dtype=logits.value.dtype), (logits,), vjp)
