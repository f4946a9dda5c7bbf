"""Shared transformer building blocks (pre-norm, numpy autograd tensors)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

MASK_NEG = -1e9


@dataclass
class ForwardContext:
    """Carries train/eval mode and the dropout RNG through a forward pass."""

    rng: np.random.Generator | None = None
    training: bool = False


EVAL_CTX = ForwardContext()


def trunc_normal(rng: np.random.Generator, shape, std=0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within 2 std."""
    w = rng.normal(0.0, std, size=shape)
    bad = np.abs(w) > 2.0 * std
    while bad.any():
        w[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(w) > 2.0 * std
    return w.astype(dtype)


def init_linear(params, name, d_in, d_out, rng, dtype):
    params[f"{name}.weight"] = Tensor(trunc_normal(rng, (d_in, d_out), dtype=dtype))
    params[f"{name}.bias"] = Tensor(np.zeros(d_out, dtype=dtype))


def init_layer_norm(params, name, d, dtype):
    params[f"{name}.gain"] = Tensor(np.ones(d, dtype=dtype))
    params[f"{name}.bias"] = Tensor(np.zeros(d, dtype=dtype))


def init_block(params, prefix, d, rng, dtype):
    init_layer_norm(params, f"{prefix}.ln1", d, dtype)
    for proj in ("wq", "wk", "wv", "wo"):
        init_linear(params, f"{prefix}.attn.{proj}", d, d, rng, dtype)
    init_layer_norm(params, f"{prefix}.ln2", d, dtype)
    init_linear(params, f"{prefix}.mlp.fc1", d, 4 * d, rng, dtype)
    init_linear(params, f"{prefix}.mlp.fc2", 4 * d, d, rng, dtype)


def linear(x, params, name, adapter=None, ctx: ForwardContext = EVAL_CTX):
    """x @ W + b, plus the low-rank adapter delta when one is attached."""
    y = T.add(T.matmul(x, params[f"{name}.weight"]), params[f"{name}.bias"])
    if adapter is not None:
        y = T.add(y, adapter.delta(x, ctx))
    return y


def layer_norm_named(x, params, name, eps=1e-5):
    return T.layer_norm(x, params[f"{name}.gain"], params[f"{name}.bias"], eps)


def attention(x, params, prefix, n_heads, bias, adapters, ctx: ForwardContext):
    """Multi-head attention over (B, L, d); ``bias`` is an additive mask."""
    b, l, d = x.shape
    dh = d // n_heads

    def heads(t):
        return T.transpose(T.reshape(t, (b, l, n_heads, dh)), (0, 2, 1, 3))

    q = heads(linear(x, params, f"{prefix}.attn.wq", adapters.get(f"{prefix}.attn.query"), ctx))
    k = heads(linear(x, params, f"{prefix}.attn.wk"))
    v = heads(linear(x, params, f"{prefix}.attn.wv", adapters.get(f"{prefix}.attn.value"), ctx))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if bias is not None:
        scores = T.add(scores, bias)
    mixed = T.matmul(T.softmax(scores, axis=-1), v)
    merged = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (b, l, d))
    return linear(merged, params, f"{prefix}.attn.wo")


def mlp(x, params, prefix):
    h = T.gelu(linear(x, params, f"{prefix}.mlp.fc1"))
    return linear(h, params, f"{prefix}.mlp.fc2")


def transformer_block(x, params, prefix, n_heads, bias, adapters, ctx: ForwardContext):
    x = T.add(x, attention(layer_norm_named(x, params, f"{prefix}.ln1"), params, prefix, n_heads, bias, adapters, ctx))
    x = T.add(x, mlp(layer_norm_named(x, params, f"{prefix}.ln2"), params, prefix))
    return x


def causal_bias(length: int, dtype=np.float32) -> np.ndarray:
    """(1, 1, L, L) additive mask: position i attends only to j <= i."""
    m = np.triu(np.full((length, length), MASK_NEG, dtype=dtype), k=1)
    return m[None, None]


def padding_bias(lengths, max_len: int, dtype=np.float32) -> np.ndarray:
    """(B, 1, 1, L) additive mask hiding padded key positions."""
    b = len(lengths)
    m = np.zeros((b, 1, 1, max_len), dtype=dtype)
    for i, n in enumerate(lengths):
        m[i, :, :, n:] = MASK_NEG
    return m


def sinusoidal_positions(n: int, d: int, dtype=np.float32) -> np.ndarray:
    """Standard fixed sin/cos absolute position table, shape (n, d)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    dim = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, dim / d)
    table = np.zeros((n, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d // 2])
    return table.astype(dtype)
