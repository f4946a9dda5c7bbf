"""Minimal numpy-backed tensors with reverse-mode automatic differentiation.

Forward math is plain numpy; every differentiable op appends an entry to the
active :class:`Tape`, and ``backward(loss)`` replays the tape once in reverse.
Training runs in float32; gradient checks build the whole graph in float64
(finite differences are unreliable in 32-bit). Outside a ``with Tape():``
block nothing is recorded and ops run at raw numpy speed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import ContractError, DimensionError

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


class Tensor:
    """Dense n-d array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype == np.float64 and not isinstance(data, np.ndarray):
            # Python floats/lists default to the training dtype.
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None  # tape that produced this tensor, if any

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad)
        return t

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed ops.

    Entries are appended in execution order, so inputs of an op always come
    from earlier entries or from leaves; ``backward`` walks the list once in
    reverse, accumulating into ``requires_grad`` leaves.
    """

    def __init__(self):
        self._entries = []  # (out, inputs, backward_fn)

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def __len__(self):
        return len(self._entries)

    def record(self, out: Tensor, inputs, backward_fn):
        out._tape = self
        self._entries.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        pending = {id(loss): np.ones_like(loss.data)}
        if loss._tape is None:
            # Loss is itself a leaf; nothing to walk.
            if loss.requires_grad:
                _accumulate(loss, pending[id(loss)])
            return
        for out, inputs, backward_fn in reversed(self._entries):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            for tensor, grad in zip(inputs, backward_fn(g)):
                if grad is None:
                    continue
                if tensor._tape is not None:
                    key = id(tensor)
                    if key in pending:
                        pending[key] = pending[key] + grad
                    else:
                        pending[key] = grad
                elif tensor.requires_grad:
                    _accumulate(tensor, grad)


_ACTIVE: list[Tape] = []


def active_tape():
    return _ACTIVE[-1] if _ACTIVE else None


def backward(loss: Tensor):
    """Accumulate dLoss/dLeaf into every requires_grad leaf under loss."""
    if loss._tape is None and not loss.requires_grad:
        raise ContractError("loss was not produced under an active tape")
    tape = loss._tape if loss._tape is not None else active_tape()
    if tape is None:
        raise ContractError("no tape available for backward()")
    tape.backward(loss)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g.astype(t.data.dtype, copy=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs(t: Tensor) -> bool:
    return t.requires_grad or t._tape is not None


def _emit(data, inputs, backward_fn) -> Tensor:
    """Wrap computed data; record the op if a tape is active and grads flow."""
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(_needs(t) for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def apply_op(data, inputs, backward_fn) -> Tensor:
    """Register a custom op: precomputed output data plus its backward rule.

    ``backward_fn(grad_out)`` must return one gradient (or None) per input.
    """
    return _emit(data, [_as_tensor(t) for t in inputs], backward_fn)


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(
        a.data + b.data,
        [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(
        a.data - b.data,
        [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(
        a.data * b.data,
        [a, b],
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _emit(
        a.data / b.data,
        [a, b],
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _emit(-a.data, [a], lambda g: (-g,))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # Split by sign to avoid overflow in exp.
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)
    return _emit(out, [x], lambda g: (g * out * (1.0 - out),))


def gelu(x) -> Tensor:
    """Exact erf-based GELU."""
    x = _as_tensor(x)
    d = x.data
    cdf = 0.5 * (1.0 + erf(d * _INV_SQRT2))
    out = (d * cdf).astype(d.dtype, copy=False)

    def bwd(g):
        pdf = np.exp(-0.5 * d * d) * _INV_SQRT_2PI
        return (g * (cdf + d * pdf),)

    return _emit(out, [x], bwd)


def dropout(x, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    x = _as_tensor(x)
    if p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _emit(x.data * mask, [x], lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.shape
    return _emit(x.data.reshape(shape), [x], lambda g: (g.reshape(old),))


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    inv = np.argsort(axes)
    return _emit(np.transpose(x.data, axes), [x], lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _emit(x.data.sum(axis=axis, keepdims=keepdims), [x], bwd)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        n = x.size
    else:
        n = x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading dims."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _emit(out, [a, b], bwd)


def softmax(x, axis=-1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    x = _as_tensor(x)
    d = x.data
    e = np.exp(d - d.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit(out, [x], bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Zero-mean / unit-variance over the last axis, then affine."""
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    reduce_axes = tuple(range(d.ndim - 1))

    def bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        dgain = (g * xhat).sum(axis=reduce_axes) if reduce_axes else g * xhat
        dbias = g.sum(axis=reduce_axes) if reduce_axes else g
        return (dx.astype(d.dtype, copy=False), dgain, dbias)

    return _emit(out.astype(d.dtype, copy=False), [x, gain, bias], bwd)


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-d convolution over time.

    ``x`` is (T, c_in) or batched (B, T, c_in); ``weight`` is
    (kernel, c_in, c_out). Output length is
    floor((T + 2*padding - kernel) / stride) + 1.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3:
        raise DimensionError(f"conv1d expects (B,T,c_in) and (k,c_in,c_out), got {x.shape}, {weight.shape}")
    k, c_in, c_out = weight.shape
    if xd.shape[2] != c_in:
        raise DimensionError(f"input channels {xd.shape[2]} != kernel channels {c_in}")
    t_in = xd.shape[1]
    t_pad = t_in + 2 * padding
    if t_pad < k:
        raise DimensionError(f"kernel {k} larger than padded input {t_pad}")
    t_out = (t_pad - k) // stride + 1
    xp = np.pad(xd, ((0, 0), (padding, padding), (0, 0))) if padding else xd
    hi = stride * (t_out - 1) + 1
    out = np.zeros((xd.shape[0], t_out, c_out), dtype=xd.dtype)
    for j in range(k):
        out += xp[:, j : j + hi : stride, :] @ weight.data[j]
    inputs = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data
        inputs.append(bias)

    def bwd(g):
        gw = np.zeros_like(weight.data)
        gxp = np.zeros_like(xp)
        for j in range(k):
            sl = xp[:, j : j + hi : stride, :]
            gw[j] = sl.reshape(-1, c_in).T @ g.reshape(-1, c_out)
            gxp[:, j : j + hi : stride, :] += g @ weight.data[j].T
        gx = gxp[:, padding : padding + t_in, :] if padding else gxp
        if squeeze:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return tuple(grads)

    return _emit(out[0] if squeeze else out, inputs, bwd)


def embedding(ids, table) -> Tensor:
    """Gather rows of ``table`` (V, d) by integer ``ids`` of any shape."""
    table = _as_tensor(table)
    idx = np.asarray(ids)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"token id out of range [0, {table.shape[0]})")

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _emit(table.data[idx], [table], bwd)


def cross_entropy_nll(logits, targets, mask) -> Tensor:
    """Mean negative log-likelihood over positions where mask == 1.

    ``logits`` is (..., V); ``targets`` and ``mask`` share the leading shape.
    """
    logits = _as_tensor(logits)
    tgt = np.asarray(targets)
    msk = np.asarray(mask, dtype=logits.dtype)
    vocab = logits.shape[-1]
    if tgt.shape != logits.shape[:-1] or msk.shape != tgt.shape:
        raise DimensionError(
            f"targets/mask shape {tgt.shape}/{msk.shape} does not match logits {logits.shape}"
        )
    if tgt.size and (tgt.min() < 0 or tgt.max() >= vocab):
        raise IndexError(f"target id out of vocab range [0, {vocab})")
    denom = msk.sum()
    if denom <= 0:
        raise ContractError("mask selects no supervised positions")
    d = logits.data
    m = d.max(axis=-1, keepdims=True)
    e = np.exp(d - m)
    z = e.sum(axis=-1, keepdims=True)
    probs = e / z
    logp = d - m - np.log(z)
    picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
    loss = -(picked * msk).sum() / denom

    def bwd(g):
        gl = probs.copy()
        np.subtract.at(gl.reshape(-1, vocab), (np.arange(tgt.size), tgt.reshape(-1)), 1.0)
        gl *= (msk / denom)[..., None]
        return (g * gl,)

    return _emit(np.asarray(loss, dtype=d.dtype), [logits], bwd)
