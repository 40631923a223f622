"""Parameter containers and the pre-norm transformer encoder shared by both encoders."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INIT_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by redrawing out-of-range entries."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


class Module:
    """Walks attributes to collect parameters with dotted names."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        ad.zero_grad(self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.astype(p.dtype).copy()
            p.zero_grad()


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = param(trunc_normal(rng, (in_dim, out_dim), dtype=dtype))
        self.bias = param(np.zeros(out_dim, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        in_dim = self.weight.shape[0]
        if x.shape[-1] != in_dim:
            raise ad.ShapeError(f"linear layer expects width {in_dim}, got input shape {x.shape}")
        lead = x.shape[:-1]
        y = ad.matmul(x.reshape(-1, in_dim), self.weight) + self.bias
        return y.reshape(*lead, self.weight.shape[1])


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-6):
        self.gamma = param(np.ones(dim, dtype=dtype))
        self.beta = param(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


def key_padding_bias(mask: np.ndarray, dtype) -> np.ndarray:
    """Additive attention bias of shape (B, 1, 1, T): 0 for real tokens, -inf for padding."""
    mask = np.asarray(mask)
    if (mask.sum(axis=-1) == 0).any():
        raise ValueError("attention mask has a row with no real tokens")
    bias = np.where(mask.astype(bool), 0.0, -np.inf).astype(dtype)
    return bias[:, None, None, :]


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, dropout: float, rng: np.random.Generator, dtype=np.float32):
        if dim % heads:
            raise ValueError(f"embed dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.dropout = dropout
        self.query = Linear(dim, dim, rng, dtype)
        self.key = Linear(dim, dim, rng, dtype)
        self.value = Linear(dim, dim, rng, dtype)
        self.out = Linear(dim, dim, rng, dtype)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, bias=None, training=False, rng=None, attentions=None) -> Tensor:
        b, t, d = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = ad.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.head_dim))
        if bias is not None:
            scores = scores + bias
        weights = ad.softmax(scores, axis=-1)
        if attentions is not None:
            attentions.append(weights.data)
        weights = ad.dropout(weights, self.dropout, training, rng)
        ctx = ad.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return ad.dropout(self.out(ctx), self.dropout, training, rng)


class EncoderBlock(Module):
    """LN -> MHSA -> residual, then LN -> MLP(gelu) -> residual."""

    def __init__(self, dim, heads, mlp_ratio, dropout, rng, dtype=np.float32):
        hidden = int(dim * mlp_ratio)
        self.ln1 = LayerNorm(dim, dtype)
        self.attn = MultiHeadSelfAttention(dim, heads, dropout, rng, dtype)
        self.ln2 = LayerNorm(dim, dtype)
        self.fc1 = Linear(dim, hidden, rng, dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype)
        self.dropout = dropout

    def __call__(self, x, bias=None, training=False, rng=None, attentions=None):
        x = x + self.attn(self.ln1(x), bias, training, rng, attentions)
        h = ad.gelu(self.fc1(self.ln2(x)))
        return x + ad.dropout(self.fc2(h), self.dropout, training, rng)


class Encoder(Module):
    def __init__(self, dim, depth, heads, mlp_ratio, dropout, rng, dtype=np.float32):
        self.blocks = [EncoderBlock(dim, heads, mlp_ratio, dropout, rng, dtype) for _ in range(depth)]
        self.norm = LayerNorm(dim, dtype)

    def __call__(self, x, mask=None, training=False, rng=None, attentions=None) -> Tensor:
        bias = key_padding_bias(mask, x.dtype) if mask is not None else None
        for block in self.blocks:
            x = block(x, bias, training, rng, attentions)
        return self.norm(x)


def encoder_parameter_count(dim: int, depth: int, mlp_ratio: float) -> int:
    hidden = int(dim * mlp_ratio)
    per_block = 2 * 2 * dim + 4 * (dim * dim + dim) + (dim * hidden + hidden) + (hidden * dim + dim)
    return depth * per_block + 2 * dim
