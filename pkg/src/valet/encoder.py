"""Audio encoder: conv downsampling plus bidirectional transformer blocks.

Maps a log-Mel matrix (T, n_mels) to latent rows H (K, d_model) where
K = ceil(T / product of conv strides). Padded frames are zero-filled and
masked out of attention, so the valid prefix of a padded batch matches the
unpadded computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import ContractError, InputTooLongError
from .tensor import Tensor


@dataclass
class EncoderConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    n_mels: int = 80
    conv_kernels: tuple = (3, 3)
    conv_strides: tuple = (1, 2)
    max_frames: int = 1500

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ContractError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if any(s < 1 for s in self.conv_strides):
            raise ContractError(f"conv strides must be >= 1, got {self.conv_strides}")
        if any(k % 2 == 0 for k in self.conv_kernels):
            raise ContractError(f"conv kernels must be odd, got {self.conv_kernels}")

    @property
    def total_stride(self) -> int:
        return int(np.prod(self.conv_strides))

    def out_len(self, t: int) -> int:
        """K for an input of T frames."""
        k = t
        for s in self.conv_strides:
            k = -(-k // s)
        return k


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
    params: dict[str, Tensor] = {}
    c_in = cfg.n_mels
    for i, (k, _s) in enumerate(zip(cfg.conv_kernels, cfg.conv_strides)):
        params[f"encoder.conv{i}.weight"] = Tensor(L.trunc_normal(rng, (k, c_in, cfg.d_model), dtype=dtype))
        params[f"encoder.conv{i}.bias"] = Tensor(np.zeros(cfg.d_model, dtype=dtype))
        c_in = cfg.d_model
    for i in range(cfg.n_layers):
        L.init_block(params, f"encoder.block{i}", cfg.d_model, rng, dtype)
    L.init_layer_norm(params, "encoder.final_norm", cfg.d_model, dtype)
    return params


def encode_batch(mels, cfg: EncoderConfig, params, ctx: L.ForwardContext = L.EVAL_CTX, adapters=None):
    """Encode a list of (T_i, n_mels) arrays. Returns (H (B, K_max, d), k_list).

    Inputs are zero-padded to the longest T; only the first k_list[i] rows of
    H[i] are meaningful.
    """
    adapters = adapters or {}
    t_list = [m.shape[0] for m in mels]
    if max(t_list) > cfg.max_frames:
        raise InputTooLongError(f"{max(t_list)} frames exceeds max_frames={cfg.max_frames}")
    if min(t_list) < 1:
        raise ContractError("empty mel input")
    dtype = params["encoder.conv0.weight"].dtype
    t_max = max(t_list)
    x = np.zeros((len(mels), t_max, cfg.n_mels), dtype=dtype)
    for i, m in enumerate(mels):
        x[i, : m.shape[0]] = m
    h = Tensor(x)
    stage_lens = list(t_list)
    for i, (k, s) in enumerate(zip(cfg.conv_kernels, cfg.conv_strides)):
        h = T.gelu(
            T.conv1d(h, params[f"encoder.conv{i}.weight"], params[f"encoder.conv{i}.bias"], stride=s, padding=k // 2)
        )
        # conv bias makes padded positions nonzero; re-zero them so later
        # stages and attention see exactly the unpadded computation
        stage_lens = [-(-n // s) for n in stage_lens]
        if len(set(stage_lens)) > 1:
            valid = np.zeros((h.shape[0], h.shape[1], 1), dtype=dtype)
            for j, n in enumerate(stage_lens):
                valid[j, :n] = 1.0
            h = T.mul(h, Tensor(valid))
    k_list = [cfg.out_len(t) for t in t_list]
    k_max = h.shape[1]
    pe = L.sinusoidal_positions(k_max, cfg.d_model, dtype=dtype)
    h = T.add(h, Tensor(pe[None]))
    bias = Tensor(L.padding_bias(k_list, k_max, dtype=dtype))
    for i in range(cfg.n_layers):
        h = L.transformer_block(h, params, f"encoder.block{i}", cfg.n_heads, bias, adapters, ctx)
    h = L.layer_norm_named(h, params, "encoder.final_norm")
    return h, k_list


def encode(mel, cfg: EncoderConfig, params, ctx: L.ForwardContext = L.EVAL_CTX, adapters=None) -> Tensor:
    """Single-utterance convenience wrapper: (T, n_mels) -> H (K, d_model)."""
    frames = mel.frames if hasattr(mel, "frames") else np.asarray(mel)
    h, k_list = encode_batch([frames], cfg, params, ctx, adapters)
    return T.reshape(h, h.shape[1:])
