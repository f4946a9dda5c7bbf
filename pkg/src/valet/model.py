"""The assembled audio+text model: encoder -> bridge -> LM.

Holds a flat name->Tensor parameter store (checkpoint-friendly), the
adapter registry, and the trainable-group marking used by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bridge as B
from . import encoder as E
from . import lm as LM
from . import tensor as T
from .audio import MelConfig
from .bridge import BridgeConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderConfig
from .errors import ConfigError, ContractError
from .layers import EVAL_CTX, ForwardContext, linear
from .lm import LMConfig
from .tensor import Tensor
from .vocab import TokenSequence, Vocabulary

# Parameter groups that may be marked trainable. The base attention / conv /
# MLP weights are never in any group: they stay frozen under LoRA.
TRAINABLE_GROUPS = ("lora", "gate", "proj", "head", "embed", "norm", "base")


def group_of(name: str) -> str:
    if name.startswith("lora."):
        return "lora"
    if name.startswith("bridge.gate."):
        return "gate"
    if name.startswith("bridge.proj."):
        return "proj"
    if name.startswith("lm.head."):
        return "head"
    if name in ("lm.tok_embed", "lm.pos_embed"):
        return "embed"
    if ".ln1." in name or ".ln2." in name or ".final_norm." in name:
        return "norm"
    return "base"


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    mel: MelConfig = field(default_factory=MelConfig)


class Model:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, params: dict, adapters: dict | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.params = params
        self.adapters = adapters or {}

    @classmethod
    def build(cls, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> "Model":
        vocab = Vocabulary()
        cfg.lm.vocab_size = len(vocab)
        if cfg.encoder.d_model != cfg.lm.d_model:
            cfg.lm.encoder_dim = cfg.encoder.d_model
        params = {}
        params.update(E.init_encoder_params(cfg.encoder, rng, dtype))
        params.update(LM.init_lm_params(cfg.lm, rng, dtype))
        params.update(B.init_bridge_params(cfg.lm.d_model, cfg.bridge, dtype))
        return cls(cfg, vocab, params)

    # -- trainability ------------------------------------------------------

    def set_trainable(self, groups) -> None:
        """Mark requires_grad by group; everything else stays frozen."""
        groups = set(groups)
        unknown = groups - set(TRAINABLE_GROUPS)
        if unknown:
            raise ConfigError(f"unknown trainable group(s): {sorted(unknown)}")
        for name, p in self.params.items():
            p.requires_grad = group_of(name) in groups

    def trainable_items(self):
        return [(n, p) for n, p in sorted(self.params.items()) if p.requires_grad]

    def frozen_items(self):
        return [(n, p) for n, p in sorted(self.params.items()) if not p.requires_grad]

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def n_trainable(self) -> int:
        return sum(p.size for _, p in self.trainable_items())

    # -- forward passes ----------------------------------------------------

    def bridged_audio(self, mels, ctx: ForwardContext = EVAL_CTX):
        """Encode + bridge a list of mel matrices -> (rows (Ba, Lb_max, d), lengths)."""
        h, k_list = E.encode_batch(mels, self.cfg.encoder, self.params, ctx, self.adapters)
        rows, lens = B.apply_bridge_batch(h, k_list, self.cfg.bridge, self.params)
        if self.cfg.lm.needs_projection:
            rows = linear(rows, self.params, "bridge.proj")
        return rows, lens

    def bridged_len_for_frames(self, t_frames: int) -> int:
        """Placeholder count the LM prompt needs for an utterance of T frames."""
        return self.cfg.bridge.bridged_len(self.cfg.encoder.out_len(t_frames))

    def forward_batch(self, token_ids, mels, splice_map, ctx: ForwardContext = EVAL_CTX) -> Tensor:
        """Training forward over a padded batch.

        token_ids: (B, L) int array already padded with vocab.pad.
        mels: list of mel matrices for the examples that carry audio.
        splice_map: list of (batch_row, audio_row, start, length) entries.
        """
        emb = T.embedding(np.asarray(token_ids), self.params["lm.tok_embed"])
        if mels:
            rows, lens = self.bridged_audio(mels, ctx)
            for row, arow, start, length in splice_map:
                if length != lens[arow]:
                    raise ContractError(f"audio span length {length} != bridged rows {lens[arow]}")
            emb = LM.splice_batch(emb, rows, splice_map)
        return LM.lm_forward(emb, self.params, self.cfg.lm, ctx, self.adapters)

    def lm_logits(self, ids, bridged_rows: np.ndarray | None = None) -> np.ndarray:
        """Inference logits (L, |V|) for one sequence; no tape, raw numpy out.

        ``bridged_rows`` are precomputed bridge outputs spliced over the
        (single) placeholder run found in ``ids``.
        """
        ids = list(ids)
        span = placeholder_span(ids, self.vocab)
        seq = TokenSequence(ids=ids, audio_span=span)
        rows = Tensor(bridged_rows) if bridged_rows is not None else None
        emb = LM.splice_audio(seq, rows, self.params, self.vocab, self.cfg.lm)
        return LM.lm_forward(emb, self.params, self.cfg.lm, adapters=self.adapters).data[0]

    # -- persistence -------------------------------------------------------

    def save(self, path: str, adapters_path: str | None = None) -> None:
        save_checkpoint(path, self.params)
        if adapters_path is not None:
            save_checkpoint(adapters_path, {n: p for n, p in self.params.items() if n.startswith("lora.")})

    def load_weights(self, path: str) -> None:
        loaded = load_checkpoint(path)
        missing = set(self.params) - set(loaded)
        extra = set(loaded) - set(self.params)
        lora_extra = {n for n in extra if n.startswith("lora.")}
        if missing or (extra - lora_extra):
            raise ConfigError(f"checkpoint mismatch: missing={sorted(missing)[:4]} extra={sorted(extra - lora_extra)[:4]}")
        for name, p in self.params.items():
            if p.shape != loaded[name].shape:
                raise ConfigError(f"checkpoint tensor {name} has shape {loaded[name].shape}, expected {p.shape}")
            p.data = loaded[name].data.astype(p.dtype)

    def load_adapters(self, path: str) -> None:
        """Overlay a lora.-prefix checkpoint onto attached adapters."""
        loaded = load_checkpoint(path)
        for name, t in loaded.items():
            if name not in self.params:
                raise ConfigError(f"adapter tensor {name} has no attachment point")
            self.params[name].data = t.data.astype(self.params[name].dtype)


def placeholder_span(ids, vocab: Vocabulary):
    """Locate the (start, len) run of <|audio_pad|> ids, or None."""
    pad = vocab.audio_pad
    start = None
    length = 0
    for i, t in enumerate(ids):
        if t == pad:
            if start is None:
                start = i
                length = 1
            elif i == start + length:
                length += 1
            else:
                raise ContractError("multiple placeholder runs in one sequence")
        # runs are contiguous by construction
    return (start, length) if start is not None else None
