"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything runs on numpy arrays in 64-bit precision so that analytic
gradients can be verified against central finite differences at tight
tolerances. A Tensor remembers the tensors it was computed from and a
closure that routes an incoming gradient back to them; creation order
doubles as a topological order, so backward() is a reverse sweep over
the reachable part of the graph.

Graphs are confined to one thread during forward/backward; distinct
graphs may run concurrently.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np


class AutogradError(RuntimeError):
    """Misuse of the differentiation machinery (bad shapes, double backward...)."""


_grad_enabled = True
_finite_checks = False


@contextlib.contextmanager
def no_grad():
    """Compute forward values only, without recording the graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_finite_checks(enabled: bool):
    """Toggle NaN/Inf detection after every forward op (off by default)."""
    global _finite_checks
    _finite_checks = bool(enabled)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_serial", "_backward_done")

    _serials = itertools.count()

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._serial = next(Tensor._serials)
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Fill grad = d(self)/d(leaf) for every requires_grad leaf.

        Gradients accumulate across calls unless zeroed. Raises on a
        non-scalar tensor and on a second backward through the same graph.
        """
        if self.data.size != 1:
            raise AutogradError(f"backward requires a scalar, got shape {self.shape}")
        if self._backward_done:
            raise AutogradError("backward called twice on the same graph")
        self._backward_done = True
        if not self.requires_grad:
            return
        # Reachable requires_grad nodes, visited once each; creation order
        # is a topological order, so sorting serials gives the sweep order.
        nodes = []
        seen = {id(self)}
        stack = [self]
        while stack:
            node = stack.pop()
            nodes.append(node)
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
        nodes.sort(key=lambda t: t._serial, reverse=True)
        self._accumulate(np.ones_like(self.data))
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, opname):
    out = Tensor(data)
    if _finite_checks and not np.all(np.isfinite(out.data)):
        raise AutogradError(f"non-finite values produced by {opname}")
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# forward ops --------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _result(data, (a, b), backward, "sub")


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accumulate(-g)

    return _result(-a.data, (a,), backward, "neg")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _result(data, (a, b), backward, "div")


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def backward(g):
        a._accumulate(g * s)

    return _result(a.data * s, (a,), backward, "scale")


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands (vector·vector gives a scalar)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise AutogradError("matmul supports 1-D and 2-D operands only")
    data = a.data @ b.data
    a2, b2 = a.data.ndim == 2, b.data.ndim == 2

    def backward(g):
        if a2 and b2:
            ga, gb = g @ b.data.T, a.data.T @ g
        elif a2 and not b2:
            ga, gb = np.outer(g, b.data), a.data.T @ g
        elif not a2 and b2:
            ga, gb = b.data @ g, np.outer(a.data, g)
        else:
            ga, gb = g * b.data, g * a.data
        if a.requires_grad:
            a._accumulate(ga)
        if b.requires_grad:
            b._accumulate(gb)

    return _result(data, (a, b), backward, "matmul")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - data * data))

    return _result(data, (a,), backward, "tanh")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _result(data, (a,), backward, "sigmoid")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _result(a.data * mask, (a,), backward, "relu")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _result(data, (a,), backward, "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise AutogradError("log of non-positive value")
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _result(data, (a,), backward, "log")


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise AutogradError("sqrt of negative value")
    data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / data)

    return _result(data, (a,), backward, "sqrt")


def clip_min(a, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only above the floor."""
    a = _as_tensor(a)
    mask = a.data > floor

    def backward(g):
        a._accumulate(g * mask)

    return _result(np.maximum(a.data, floor), (a,), backward, "clip_min")


def minimum(a, b) -> Tensor:
    """Elementwise min; at ties the gradient goes to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ~take_a, b.data.shape))

    return _result(data, (a, b), backward, "minimum")


def softmax(a) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    a = _as_tensor(a)
    if a.data.ndim == 0 or a.data.shape[-1] == 0:
        raise AutogradError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        a._accumulate(data * (g - inner))

    return _result(data, (a,), backward, "softmax")


def concat(tensors, axis=0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return _result(data, tensors, backward, "concat")


def stack(tensors) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = [_as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors])

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(g[i])

    return _result(data, tensors, backward, "stack")


def narrow(a, key) -> Tensor:
    """Basic indexing (ints and slices); gradient scatters back."""
    a = _as_tensor(a)
    data = a.data[key]

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[key] += g
        a._accumulate(buf)

    return _result(data, (a,), backward, "slice")


def transpose(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accumulate(g.T)

    return _result(a.data.T, (a,), backward, "transpose")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    orig = a.data.shape

    def backward(g):
        a._accumulate(g.reshape(orig))

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _result(data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape) / n)

    return _result(data, (a,), backward, "mean")


def embedding_lookup(table, ids) -> Tensor:
    """Rows of `table` at integer `ids` (a list or int array)."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.intp)
    data = table.data[idx]

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return _result(data, (table,), backward, "embedding_lookup")


def scatter_add(values, indices, size: int) -> Tensor:
    """Vector of `size` zeros with values[i] added at indices[i] (duplicates accumulate)."""
    values = _as_tensor(values)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise AutogradError("scatter index out of range")
    data = np.zeros(size)
    np.add.at(data, idx, values.data)

    def backward(g):
        values._accumulate(g[idx])

    return _result(data, (values,), backward, "scatter_add")


# verification -------------------------------------------------------

def grad_check(f, point, step=1e-4) -> float:
    """Max relative error between backward() gradients and central differences.

    `f` maps the tensors in `point` (a Tensor or a sequence of Tensors) to a
    scalar Tensor. Relative error per coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    tensors = [point] if isinstance(point, Tensor) else list(point)
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    out = f(*tensors)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise AutogradError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    worst = 0.0
    with no_grad():
        for t, ana in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            aflat = ana.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(f(*tensors).data)
                flat[i] = orig - step
                lo = float(f(*tensors).data)
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * step)
                err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
                if err > worst:
                    worst = err
    return worst
