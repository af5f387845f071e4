"""Reverse-mode automatic differentiation over float64 numpy arrays.

A small tape: every operation returns a new :class:`Tensor` that remembers
its parents and a closure routing the output gradient back to them.
Only the operations the models in this package need are implemented.
All data is float64; gradients are exact up to floating point, which is
what the finite-difference checks in the test suite rely on.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _special

__all__ = [
    "Tensor", "no_grad", "constant", "concat", "pad", "take",
    "conv2d_raw", "conv1d_raw", "exp", "log", "tanh", "erf",
    "sigmoid", "relu", "clip", "gelu",
]

_GRAD_ENABLED = [True]


class no_grad:
    """Disable graph construction inside a ``with`` block (inference mode)."""

    def __enter__(self):
        self._saved = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._saved
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents and node is not self:
                    node.grad = None  # keep grads only on leaves

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_t(other), -1.0))

    def __rsub__(self, other):
        return add(_t(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_t(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = 1
            for a in axes:
                n *= self.data.shape[a]
        return tsum(self, axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def swapaxes(self, a, b):
        axes = list(range(self.data.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- arithmetic ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(data, (a, b), bw)


def power(a, p: float) -> Tensor:
    a = _t(a)
    p = float(p)
    data = a.data ** p

    def bw(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _node(data, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    data = a.data @ b.data

    def bw(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _node(data, (a, b), bw)


# -- pointwise nonlinearities ------------------------------------------------

def exp(a) -> Tensor:
    a = _t(a)
    data = np.exp(a.data)

    def bw(g):
        _accum(a, g * data)

    return _node(data, (a,), bw)


def log(a) -> Tensor:
    a = _t(a)
    data = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _node(data, (a,), bw)


def tanh(a) -> Tensor:
    a = _t(a)
    data = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - data * data))

    return _node(data, (a,), bw)


def erf(a) -> Tensor:
    a = _t(a)
    data = _special.erf(a.data)
    c = 2.0 / np.sqrt(np.pi)

    def bw(g):
        _accum(a, g * c * np.exp(-a.data * a.data))

    return _node(data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = _t(a)
    data = _special.expit(a.data)

    def bw(g):
        _accum(a, g * data * (1.0 - data))

    return _node(data, (a,), bw)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU as one node; the composition would add five
    large intermediates per call."""
    a = _t(a)
    u = _special.erf(a.data * _INV_SQRT2)
    data = 0.5 * a.data * (1.0 + u)

    def bw(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        _accum(a, g * (0.5 * (1.0 + u) + a.data * pdf))

    return _node(data, (a,), bw)


def relu(a) -> Tensor:
    a = _t(a)
    data = np.maximum(a.data, 0.0)

    def bw(g):
        _accum(a, g * (a.data > 0.0))

    return _node(data, (a,), bw)


def clip(a, lo: float | None, hi: float | None) -> Tensor:
    """Clamp; gradient is zero where the input was clipped."""
    a = _t(a)
    data = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        inside &= a.data > lo
    if hi is not None:
        inside &= a.data < hi

    def bw(g):
        _accum(a, g * inside)

    return _node(data, (a,), bw)


# -- reductions and shape ops ------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            shape = [1 if i in axes else n for i, n in enumerate(a.data.shape)]
            g = g.reshape(shape)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(data, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = _t(a)
    data = a.data.reshape(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(data, (a,), bw)


def transpose(a, axes=None) -> Tensor:
    a = _t(a)
    data = a.data.transpose(axes)

    def bw(g):
        if axes is None:
            _accum(a, g.transpose())
        else:
            inv = np.argsort(axes)
            _accum(a, g.transpose(inv))

    return _node(data, (a,), bw)


def getitem(a, key) -> Tensor:
    """Basic (slice/int) indexing; backward scatters into a zero array."""
    a = _t(a)
    data = a.data[key]

    def bw(g):
        buf = np.zeros_like(a.data)
        buf[key] += g
        _accum(a, buf)

    return _node(data, (a,), bw)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _node(data, tuple(tensors), bw)


def pad(a, pad_width) -> Tensor:
    """Zero padding; `pad_width` as for np.pad."""
    a = _t(a)
    data = np.pad(a.data, pad_width)

    def bw(g):
        idx = tuple(slice(lo, g.shape[i] - hi) for i, (lo, hi) in enumerate(pad_width))
        _accum(a, g[idx])

    return _node(data, (a,), bw)


def take(a, indices) -> Tensor:
    """Row gather along axis 0 (embedding lookup)."""
    a = _t(a)
    indices = np.asarray(indices, dtype=np.intp)
    data = a.data[indices]

    def bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, indices, g)
        _accum(a, buf)

    return _node(data, (a,), bw)


# -- convolution primitives ----------------------------------------------

def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # x: (N, H, W, C) already padded -> (N, Ho, Wo, k*k*C)
    n, h, w, c = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    # win: (N, H-k+1, W-k+1, C, k, k)
    win = win[:, ::stride, ::stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n, ho, wo, k * k * c)
    return np.ascontiguousarray(cols)


def conv2d_raw(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int) -> Tensor:
    """2-D convolution, channels-last.

    x: (N, H, W, Cin); w: (k, k, Cin, Cout); b: (Cout,).
    Kept a single primitive (rather than a slice-and-matmul composition)
    so the graph stays small for large frame batches.
    """
    x, w, b = _t(x), _t(w), _t(b)
    k = w.data.shape[0]
    cin, cout = w.data.shape[2], w.data.shape[3]
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = _im2col(xp, k, stride)  # (N, Ho, Wo, k*k*Cin)
    wflat = w.data.reshape(k * k * cin, cout)
    data = cols @ wflat + b.data

    def bw(g):
        n, ho, wo, _ = g.shape
        gmat = g.reshape(-1, cout)
        cmat = cols.reshape(-1, k * k * cin)
        _accum(w, (cmat.T @ gmat).reshape(w.data.shape))
        _accum(b, gmat.sum(axis=0))
        if x.requires_grad:
            gcols = (gmat @ wflat.T).reshape(n, ho, wo, k, k, cin)
            gxp = np.zeros_like(xp)
            span_h = stride * (ho - 1) + 1
            span_w = stride * (wo - 1) + 1
            for ki in range(k):
                for kj in range(k):
                    gxp[:, ki:ki + span_h:stride, kj:kj + span_w:stride, :] += gcols[:, :, :, ki, kj, :]
            if padding:
                gxp = gxp[:, padding:-padding, padding:-padding, :]
            _accum(x, gxp)

    return _node(data, (x, w, b), bw)


def conv1d_raw(x: Tensor, w: Tensor, b: Tensor, dilation: int) -> Tensor:
    """1-D same-length convolution over time, kernel size 3.

    x: (T, Cin); w: (3, Cin, Cout); b: (Cout,).
    """
    x, w, b = _t(x), _t(w), _t(b)
    t = x.data.shape[0]
    cin, cout = w.data.shape[1], w.data.shape[2]
    d = dilation
    xp = np.pad(x.data, ((d, d), (0, 0)))
    taps = [xp[i * d:i * d + t] for i in range(3)]
    data = taps[0] @ w.data[0] + taps[1] @ w.data[1] + taps[2] @ w.data[2] + b.data

    def bw(g):
        gw = np.stack([taps[i].T @ g for i in range(3)])
        _accum(w, gw)
        _accum(b, g.sum(axis=0))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(3):
                gxp[i * d:i * d + t] += g @ w.data[i].T
            _accum(x, gxp[d:d + t])

    return _node(data, (x, w, b), bw)
