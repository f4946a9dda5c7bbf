"""Audio-to-LM bridge: optional mean-pool aggregation, concatenation, gating.

Modes map encoder output H (K rows) to the rows actually handed to the LM:
``sequence_only`` passes H through, ``pooled_only`` emits just the time
average R, ``pooled_plus_sequence`` prepends R to H (K+1 rows). An optional
sigmoid gate modulates the result elementwise. With gating disabled the
bridge is a bit-exact pass-through of whatever the mode produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

MODES = ("sequence_only", "pooled_only", "pooled_plus_sequence")


@dataclass
class BridgeConfig:
    mode: str = "pooled_plus_sequence"
    gating: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown bridge mode {self.mode!r} (choose from {MODES})")

    def bridged_len(self, k: int) -> int:
        """Rows handed to the LM for an encoder output of K rows."""
        if self.mode == "sequence_only":
            return k
        if self.mode == "pooled_only":
            return 1
        return k + 1


def mean_pool(h: Tensor) -> Tensor:
    """Time-average of H (K, z) -> (z,). Pooling a constant is the identity."""
    if h.ndim != 2:
        raise DimensionError(f"mean_pool expects (K, z), got {h.shape}")
    if h.shape[0] < 1:
        raise ContractError("mean_pool on empty sequence")
    return T.tmean(h, axis=0)


def concat_pooled(r: Tensor, h: Tensor) -> Tensor:
    """Stack pooled vector R on top of H: row 0 is R, rows 1..K are H."""
    if r.ndim != 1 or h.ndim != 2 or r.shape[0] != h.shape[1]:
        raise ContractError(f"pooled vector {r.shape} does not match rows {h.shape}")
    return T.concat([T.reshape(r, (1, -1)), h], axis=0)


def gate(h: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Elementwise sigmoid gate: sigma(h W^T + b) * h, same shape as h."""
    if weight.ndim != 2 or weight.shape[0] != weight.shape[1] or weight.shape[0] != h.shape[-1]:
        raise DimensionError(f"gate weight {weight.shape} incompatible with input {h.shape}")
    signal = T.sigmoid(T.add(T.matmul(h, T.transpose(weight, (1, 0))), bias))
    return T.mul(signal, h)


def init_bridge_params(d_model: int, cfg: BridgeConfig, dtype=np.float32) -> dict[str, Tensor]:
    """Gate starts near pass-through: W = 0, b = +4 so sigma(b) ~ 0.982."""
    params: dict[str, Tensor] = {}
    if cfg.gating:
        params["bridge.gate.weight"] = Tensor(np.zeros((d_model, d_model), dtype=dtype))
        params["bridge.gate.bias"] = Tensor(np.full(d_model, 4.0, dtype=dtype))
    return params


def apply_bridge(h: Tensor, cfg: BridgeConfig, params: dict[str, Tensor]) -> Tensor:
    """Full bridge for a single encoder output (K, z) -> (bridged_len, z)."""
    if cfg.mode == "sequence_only":
        out = h
    elif cfg.mode == "pooled_only":
        out = T.reshape(mean_pool(h), (1, -1))
    else:
        out = concat_pooled(mean_pool(h), h)
    if cfg.gating:
        out = gate(out, params["bridge.gate.weight"], params["bridge.gate.bias"])
    return out


def apply_bridge_batch(
    h: Tensor, lengths, cfg: BridgeConfig, params: dict[str, Tensor]
) -> tuple[Tensor, list[int]]:
    """Batched bridge over padded H (B, K_max, z) with per-example valid rows.

    Returns the padded bridged tensor and the per-example bridged lengths.
    Padded rows hold garbage; callers must only read the valid prefix.
    """
    lengths = [int(k) for k in lengths]
    if any(k < 1 for k in lengths):
        raise ContractError("mean_pool on empty sequence")
    out_lens = [cfg.bridged_len(k) for k in lengths]
    if cfg.mode == "sequence_only":
        out = h
    else:
        b, k_max, _ = h.shape
        mask = np.zeros((b, k_max, 1), dtype=h.dtype)
        for i, k in enumerate(lengths):
            mask[i, :k] = 1.0 / k
        pooled = T.tsum(T.mul(h, Tensor(mask)), axis=1, keepdims=True)  # (B, 1, z)
        if cfg.mode == "pooled_only":
            out = pooled
        else:
            out = T.concat([pooled, h], axis=1)
    if cfg.gating:
        out = gate(out, params["bridge.gate.weight"], params["bridge.gate.bias"])
    return out, out_lens
