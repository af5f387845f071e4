"""Layers and parameter management on top of the autodiff engine."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SQRT2 = math.sqrt(2.0)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Base class: parameters are collected from attributes in definition order."""

    def named_parameters(self, prefix: str = ""):
        for name, attr in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(attr, Tensor) and attr.requires_grad:
                yield full, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(full + ".")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing={missing}, unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def n_params(self) -> int:
        return sum(p.data.size for p in self.parameters())


# -- functional pieces -------------------------------------------------------

gelu = ad.gelu


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = ad.constant(x.data.max(axis=axis, keepdims=True))
    e = ad.exp(x - shift)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = ad.constant(x.data.max(axis=axis, keepdims=True))
    z = x - shift
    return z - ad.log(ad.exp(z).sum(axis=axis, keepdims=True))


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    """Classic fixed sin/cos position table, shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


# -- layers ------------------------------------------------------------------

class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(xavier_uniform(rng, d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc * ((var + self._eps) ** -0.5) * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, n_rows: int, dim: int, rng: np.random.Generator):
        self.weight = parameter(rng.normal(0.0, 0.02, size=(n_rows, dim)))

    def __call__(self, indices) -> Tensor:
        return ad.take(self.weight, indices)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        if dim % n_heads:
            raise ValueError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self._heads = n_heads
        self._dh = dim // n_heads

    def __call__(self, x: Tensor) -> Tensor:
        # x: (B, T, D)
        b, t, d = x.shape
        h, dh = self._heads, self._dh
        qkv = self.qkv(x).reshape((b, t, 3, h, dh)).transpose((2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]  # each (B, H, T, dh)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
        attn = softmax(scores, axis=-1)
        out = (attn @ v).transpose((0, 2, 1, 3)).reshape((b, t, d))
        return self.proj(out)


class TransformerEncoderLayer(Module):
    """Pre-norm encoder layer: attention and feed-forward with residuals."""

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator, ff_mult: int = 4):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, n_heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_mult * dim, rng)
        self.ff2 = Linear(ff_mult * dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ff2(gelu(self.ff1(self.ln2(x))))


class Conv2d(Module):
    """3x3 channels-last convolution."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 stride: int = 2, padding: int = 1, k: int = 3):
        fan_in = k * k * c_in
        self.weight = parameter(xavier_uniform(rng, fan_in, c_out, shape=(k, k, c_in, c_out)))
        self.bias = parameter(np.zeros(c_out))
        self._stride = stride
        self._padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d_raw(x, self.weight, self.bias, self._stride, self._padding)


class DilatedConv1d(Module):
    """Kernel-3 same-length temporal convolution."""

    def __init__(self, c_in: int, c_out: int, dilation: int, rng: np.random.Generator):
        self.weight = parameter(xavier_uniform(rng, 3 * c_in, c_out, shape=(3, c_in, c_out)))
        self.bias = parameter(np.zeros(c_out))
        self._dilation = dilation

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d_raw(x, self.weight, self.bias, self._dilation)
