"""Decoder-only language model over spliced audio/text embeddings.

Token embeddings for the ``<|audio_pad|>`` run are replaced row-for-row by
bridged encoder output; everything else comes from the token table. Causal
self-attention, learned absolute positions, pre-norm blocks, untied output
head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import ContractError, InputTooLongError
from .tensor import Tensor
from .vocab import TokenSequence, Vocabulary


@dataclass
class LMConfig:
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    context_len: int = 1024
    vocab_size: int = 0  # filled from the Vocabulary
    encoder_dim: int | None = None  # set when z != d_model to enable a projection

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ContractError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @property
    def needs_projection(self) -> bool:
        return self.encoder_dim is not None and self.encoder_dim != self.d_model


def init_lm_params(cfg: LMConfig, rng: np.random.Generator, dtype=np.float32):
    params: dict[str, Tensor] = {}
    params["lm.tok_embed"] = Tensor(L.trunc_normal(rng, (cfg.vocab_size, cfg.d_model), dtype=dtype))
    params["lm.pos_embed"] = Tensor(L.trunc_normal(rng, (cfg.context_len, cfg.d_model), dtype=dtype))
    for i in range(cfg.n_layers):
        L.init_block(params, f"lm.block{i}", cfg.d_model, rng, dtype)
    L.init_layer_norm(params, "lm.final_norm", cfg.d_model, dtype)
    L.init_linear(params, "lm.head", cfg.d_model, cfg.vocab_size, rng, dtype)
    if cfg.needs_projection:
        L.init_linear(params, "bridge.proj", cfg.encoder_dim, cfg.d_model, rng, dtype)
    return params


def splice_batch(tok_embed: Tensor, bridged: Tensor, entries) -> Tensor:
    """Replace placeholder rows with audio rows across a padded batch.

    ``entries`` is a list of (batch_row, audio_row, start, length): rows
    ``start..start+length`` of batch row ``batch_row`` are replaced by the
    first ``length`` rows of ``bridged[audio_row]``. Non-placeholder rows
    pass through bit-exactly.
    """
    out = tok_embed.data.copy()
    for row, arow, start, length in entries:
        out[row, start : start + length] = bridged.data[arow, :length]

    def bwd(g):
        gt = g.copy()
        gb = np.zeros(bridged.shape, dtype=g.dtype)
        for row, arow, start, length in entries:
            gt[row, start : start + length] = 0.0
            gb[arow, :length] += g[row, start : start + length]
        return (gt, gb)

    return T.apply_op(out, [tok_embed, bridged], bwd)


def splice_audio(seq: TokenSequence, bridged: Tensor, params, vocab: Vocabulary, cfg: LMConfig) -> Tensor:
    """Embed one token sequence and substitute its audio span.

    The span must contain only ``<|audio_pad|>`` ids and its length must
    equal the bridged row count. A span of length 0 (or no span) is the
    text-only path.
    """
    ids = np.asarray(seq.ids, dtype=np.int64)
    emb = T.embedding(ids[None], params["lm.tok_embed"])
    if seq.audio_span is None or seq.audio_span[1] == 0:
        if bridged is not None and bridged.shape[0] > 0:
            raise ContractError("audio provided but the sequence has no placeholder span")
        return emb
    start, length = seq.audio_span
    span_ids = ids[start : start + length]
    if not np.all(span_ids == vocab.audio_pad):
        raise ContractError("audio span contains non-placeholder tokens")
    if bridged is None or bridged.shape[0] != length:
        have = 0 if bridged is None else bridged.shape[0]
        raise ContractError(f"audio span length {length} != bridged rows {have}")
    rows = T.reshape(bridged, (1,) + tuple(bridged.shape))
    return splice_batch(emb, rows, [(0, 0, start, length)])


def lm_forward(embedded: Tensor, params, cfg: LMConfig, ctx: L.ForwardContext = L.EVAL_CTX, adapters=None) -> Tensor:
    """(B, L, d) embeddings -> (B, L, |V|) next-token logits, causal."""
    adapters = adapters or {}
    b, l, d = embedded.shape
    if l > cfg.context_len:
        raise InputTooLongError(f"sequence length {l} exceeds context_len={cfg.context_len}")
    pos = T.embedding(np.arange(l)[None], params["lm.pos_embed"])
    h = T.add(embedded, pos)
    bias = Tensor(L.causal_bias(l, dtype=embedded.dtype))
    for i in range(cfg.n_layers):
        h = L.transformer_block(h, params, f"lm.block{i}", cfg.n_heads, bias, adapters, ctx)
    h = L.layer_norm_named(h, params, "lm.final_norm")
    return L.linear(h, params, "lm.head")
