"""Minimal reverse-mode automatic differentiation over numpy arrays.

Forward operations append to an active Tape (the computation record);
``backward`` replays the record in reverse to accumulate gradients for
every tensor marked ``requires_grad``.  Arrays are float32 by default;
a float64 mode exists for finite-difference gradient checking, where
32-bit rounding would drown the comparison.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    # arithmetic sugar; constants are lifted to non-grad tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of forward ops; reverse iteration is a valid
    topological order for backpropagation."""

    __slots__ = ("nodes",)

    def __init__(self):
        # each node: (output tensor, parent tensors, backward fn)
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []


_TAPE: Optional[Tape] = None


@contextlib.contextmanager
def record(tape: Tape):
    """Activate ``tape`` so forward ops are recorded onto it."""
    global _TAPE
    prev = _TAPE
    _TAPE = tape
    try:
        yield tape
    finally:
        _TAPE = prev


@contextlib.contextmanager
def no_grad():
    global _TAPE
    prev = _TAPE
    _TAPE = None
    try:
        yield
    finally:
        _TAPE = prev


def _emit(out: Tensor, parents: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    tape = _TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.nodes.append((out, parents, bwd))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / arithmetic ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _emit(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _emit(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _emit(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)

    def bwd(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _emit(out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _emit(out, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))

    def bwd(g):
        return (g * (a.data > 0),)

    return _emit(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def bwd(g):
        return (g * (1.0 - y * y),)

    return _emit(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _emit(out, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    return _emit(out, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    return _emit(out, (a,), lambda g: (g / a.data,))


# ---------------------------------------------------------------------------
# matmul / shape ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.matmul(a.data, b.data))

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _emit(out, (a, b), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _emit(out, (a,), bwd)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out = Tensor(np.swapaxes(a.data, ax1, ax2))

    def bwd(g):
        return (np.swapaxes(g, ax1, ax2),)

    return _emit(out, (a,), bwd)


def slice_(a: Tensor, key) -> Tensor:
    out = Tensor(a.data[key])

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _emit(out, (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g):
        return tuple(piece for piece in np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _emit(out, tuple(tensors), bwd)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _emit(out, (a,), bwd)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.data.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg / n, a.data.shape).copy(),)

    return _emit(out, (a,), bwd)


# ---------------------------------------------------------------------------
# indexing / gather ops
# ---------------------------------------------------------------------------

def gather_rows(table: Tensor, ids) -> Tensor:
    """Embedding-style row lookup; ids is any integer ndarray."""
    idx = np.asarray(ids)
    out = Tensor(table.data[idx])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, *table.data.shape[1:]))
        return (gt,)

    return _emit(out, (table,), bwd)


def take_along_last(a: Tensor, idx) -> Tensor:
    """out[..., j] = a[..., idx[..., j]] with one index per row (gather)."""
    ind = np.asarray(idx)[..., None]
    out = Tensor(np.take_along_axis(a.data, ind, axis=-1).squeeze(-1))

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, ind, g[..., None], axis=-1)
        return (ga,)

    return _emit(out, (a,), bwd)


def edge_aggregate(x: Tensor, src, dst, n_out: int, weights=None) -> Tensor:
    """out[d] += w * x[s] for every edge (s, d); the message-passing kernel."""
    s = np.asarray(src, dtype=np.intp)
    d = np.asarray(dst, dtype=np.intp)
    msgs = x.data[s]
    if weights is not None:
        w = np.asarray(weights, dtype=x.data.dtype)
        msgs = msgs * w[:, None]
    acc = np.zeros((n_out,) + x.data.shape[1:], dtype=x.data.dtype)
    np.add.at(acc, d, msgs)
    out = Tensor(acc)

    def bwd(g):
        back = g[d]
        if weights is not None:
            back = back * np.asarray(weights, dtype=g.dtype)[:, None]
        gx = np.zeros_like(x.data)
        np.add.at(gx, s, back)
        return (gx,)

    return _emit(out, (x,), bwd)


# ---------------------------------------------------------------------------
# fused ops
# ---------------------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Shift-stable softmax along ``axis``."""
    if a.data.shape[-1 if axis == -1 else axis] < 1 or a.data.size == 0:
        raise ValueError("softmax of an empty vector")
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _emit(out, (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.size == 0:
        raise ValueError("log_softmax of an empty vector")
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y)

    def bwd(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _emit(out, (a,), bwd)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * weight.data + bias.data)
    n = x.data.shape[-1]

    def bwd(g):
        gy = g * weight.data
        gw = (g * xhat).reshape(-1, n).sum(axis=0)
        gb = g.reshape(-1, n).sum(axis=0)
        mean_gy = gy.mean(axis=-1, keepdims=True)
        mean_gy_xhat = (gy * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gy - mean_gy - xhat * mean_gy_xhat)
        return gx, gw, gb

    return _emit(out, (x, weight, bias), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out = Tensor(x.data * keep)
    return _emit(out, (x,), lambda g: (g * keep,))


def cross_entropy(target, predicted_log_probs: Tensor) -> Tensor:
    """-sum(target * log_probs); target is a fixed probability vector."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    lp = predicted_log_probs
    if t.shape != lp.data.shape:
        raise ValueError(
            f"cross_entropy shape mismatch: target {t.shape} vs log-probs {lp.data.shape}"
        )
    return neg(sum_(mul(Tensor(t), lp)))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor,
             params: Optional[Iterable[Tensor]] = None) -> dict[int, np.ndarray]:
    """Run reverse-mode differentiation of ``loss`` over ``tape``.

    Accumulates into ``.grad`` of every requires_grad leaf reached and
    returns a map ``id(tensor) -> gradient``.  When ``params`` is given,
    every listed tensor is guaranteed a gradient (zeros if unreached).
    """
    if loss.data.shape != ():
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    produced = {id(node[0]) for node in tape.nodes}
    for out, parents, bwd in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        pgrads = bwd(g)
        for p, pg in zip(parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            if key not in produced:
                leaves[key] = p
    result: dict[int, np.ndarray] = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        result[key] = g
    if params is not None:
        for p in params:
            if id(p) not in result:
                z = np.zeros_like(p.data)
                p.grad = z if p.grad is None else p.grad
                result[id(p)] = p.grad
    return result
