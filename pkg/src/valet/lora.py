"""Low-rank adapters on attention query/value projections.

Each adapter adds delta(x) = (alpha/r) * dropout(x) A^T B^T to a frozen base
projection. B starts at zero, so a freshly attached model is bit-identical
to the base model; merge() folds a trained adapter back into the dense
weight for deployment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .layers import ForwardContext, trunc_normal
from .tensor import Tensor


@dataclass
class LoRAConfig:
    rank: int = 8
    alpha: float = 32.0
    dropout_p: float = 0.1
    projections: tuple = ("query", "value")


@dataclass
class LoRAAdapter:
    a: Tensor  # (r, d_in)
    b: Tensor  # (d_out, r)
    rank: int
    alpha: float
    dropout_p: float = 0.0

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def delta(self, x, ctx: ForwardContext = ForwardContext()) -> Tensor:
        """(alpha/r) * B A dropout(x), expressed on row-major activations."""
        h = x
        if ctx.training and self.dropout_p > 0.0:
            h = T.dropout(h, self.dropout_p, ctx.rng)
        h = T.matmul(h, T.transpose(self.a, (1, 0)))
        h = T.matmul(h, T.transpose(self.b, (1, 0)))
        return T.mul(h, self.scale)

    def n_params(self) -> int:
        return self.a.size + self.b.size


@dataclass
class AttachmentPlan:
    """(attention-module path, projection) pairs, each attached at most once."""

    targets: list = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.targets)) != len(self.targets):
            raise ContractError("duplicate LoRA attachment target")


def default_plan(enc_layers: int, lm_layers: int, projections=("query", "value")) -> AttachmentPlan:
    """Adapters on the query and value matrices of every attention block."""
    targets = []
    for i in range(enc_layers):
        for p in projections:
            targets.append((f"encoder.block{i}.attn", p))
    for i in range(lm_layers):
        for p in projections:
            targets.append((f"lm.block{i}.attn", p))
    return AttachmentPlan(targets)


_PROJ_WEIGHT = {"query": "wq", "value": "wv", "key": "wk", "output": "wo"}


def attach(model, plan: AttachmentPlan, cfg: LoRAConfig, rng: np.random.Generator):
    """Create adapters on the model and freeze their base projections.

    A is drawn normal(0, 0.02); B is zero, so forward passes are unchanged
    until training moves B. Adapter tensors are registered under the
    ``lora.`` name prefix so they checkpoint separately from the base.
    """
    dtype = model.params["lm.tok_embed"].dtype
    for path, proj in plan.targets:
        if proj not in _PROJ_WEIGHT:
            raise ConfigError(f"unknown projection {proj!r}")
        wname = f"{path}.{_PROJ_WEIGHT[proj]}.weight"
        if wname not in model.params:
            raise ConfigError(f"unknown LoRA target path {path!r}")
        w = model.params[wname]
        d_in, d_out = w.shape
        a = Tensor(rng.normal(0.0, 0.02, size=(cfg.rank, d_in)).astype(dtype), requires_grad=True)
        b = Tensor(np.zeros((d_out, cfg.rank), dtype=dtype), requires_grad=True)
        adapter = LoRAAdapter(a=a, b=b, rank=cfg.rank, alpha=cfg.alpha, dropout_p=cfg.dropout_p)
        key = f"{path}.{proj}"
        model.adapters[key] = adapter
        model.params[f"lora.{key}.A"] = a
        model.params[f"lora.{key}.B"] = b
        w.requires_grad = False
        model.params[f"{path}.{_PROJ_WEIGHT[proj]}.bias"].requires_grad = False
    return model


def merge(adapter: LoRAAdapter, w: Tensor) -> Tensor:
    """W' = W + (alpha/r) B A, on (d_in, d_out) storage."""
    delta = adapter.scale * (adapter.a.data.T @ adapter.b.data.T)
    if delta.shape != w.shape:
        raise ContractError(f"adapter delta {delta.shape} does not match weight {w.shape}")
    return Tensor(w.data + delta.astype(w.dtype))


def unmerge(adapter: LoRAAdapter, w_merged: Tensor) -> Tensor:
    delta = adapter.scale * (adapter.a.data.T @ adapter.b.data.T)
    if delta.shape != w_merged.shape:
        raise ContractError(f"adapter delta {delta.shape} does not match weight {w_merged.shape}")
    return Tensor(w_merged.data - delta.astype(w_merged.dtype))


def adapter_param_count(model) -> int:
    """Total trainable adapter parameters across all attachments."""
    return sum(ad.n_params() for ad in model.adapters.values())
