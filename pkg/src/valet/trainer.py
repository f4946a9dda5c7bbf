"""Training loop: AdamW with linear warmup/decay, global-norm clipping.

Only explicitly trainable tensors (adapters, gate, optional projection,
and the configured desk-scale extras) receive updates; everything else is
frozen and must stay bit-identical across steps.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .layers import ForwardContext
from .seeding import rng_for
from .taskdata import MelCache, MixWeights, build_example, sample_batch, template_for
from .tensor import Tape, Tensor


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.99
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    warmup_frac: float = 0.10
    clip_norm: float = 1.0
    steps: int = 3000
    batch_size: int = 16
    seed: int = 0
    val_every: int = 200
    val_examples: int = 48
    # which parameter groups train; the pretrained-backbone setting would be
    # ("lora", "gate", "proj") but a random-init desk-scale base also needs
    # its embeddings/head/norms adapted to learn anything at all
    trainable: tuple = ("lora", "gate", "proj", "head", "embed", "norm")

    def __post_init__(self):
        if not 0.0 < self.warmup_frac < 1.0:
            raise ContractError(f"warmup_frac must be in (0, 1), got {self.warmup_frac}")
        if self.clip_norm <= 0.0:
            raise ContractError(f"clip_norm must be positive, got {self.clip_norm}")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


class TrainAbort(RuntimeError):
    """Raised when the loss goes non-finite; the last good checkpoint stays."""


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear 0 -> lr over the warmup span, then linear lr -> 0 at cfg.steps."""
    warmup = cfg.warmup_frac * cfg.steps
    if step <= warmup:
        return cfg.lr * step / warmup
    return cfg.lr * (cfg.steps - step) / (cfg.steps - warmup)


def clip_gradients(grads: dict, max_norm: float = 1.0) -> tuple[dict, float]:
    """Scale all gradients by a common factor so the global L2 norm <= max_norm."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(sq))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def adamw_step(params: dict, grads: dict, state: OptimizerState, cfg: TrainConfig, lr: float | None = None) -> None:
    """Decoupled weight decay, then bias-corrected Adam moments.

    Decay applies to matrices only (adapters, embeddings, heads), never to
    gains/biases. Updates happen in place.
    """
    if lr is None:
        lr = cfg.lr
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if cfg.weight_decay > 0.0 and p.data.ndim >= 2:
            p.data *= 1.0 - lr * cfg.weight_decay
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


# ---------------------------------------------------------------------------
# batch assembly + loss
# ---------------------------------------------------------------------------


def assemble_batch(examples, vocab):
    """Pad built examples into training arrays.

    Returns (inputs (B, L), labels (B, L), mask (B, L), mels, splice_map)
    under the next-token convention: inputs are ids[:-1], labels ids[1:].
    """
    max_len = max(len(ex.tokens.ids) for ex in examples) - 1
    b = len(examples)
    inputs = np.full((b, max_len), vocab.pad, dtype=np.int64)
    labels = np.zeros((b, max_len), dtype=np.int64)
    mask = np.zeros((b, max_len), dtype=np.float32)
    mels = []
    splice_map = []
    for row, ex in enumerate(examples):
        ids = np.asarray(ex.tokens.ids, dtype=np.int64)
        n = len(ids) - 1
        inputs[row, :n] = ids[:-1]
        labels[row, :n] = ids[1:]
        mask[row, :n] = ex.loss_mask[1:]
        if ex.tokens.audio_span is not None and ex.tokens.audio_span[1] > 0:
            start, length = ex.tokens.audio_span
            splice_map.append((row, len(mels), start, length))
            mels.append(ex.mel)
    return inputs, labels, mask, mels, splice_map


def _build_examples(model, batch, phase, mel_cache, tmpl_rng):
    examples = []
    for task, rec in batch:
        template = template_for(task, phase, tmpl_rng)
        audio_len = None
        if template.audio:
            frames = mel_cache.frames(rec)
            audio_len = model.bridged_len_for_frames(frames.shape[0])
            ex = build_example(rec, template, model.vocab, audio_len)
            ex.mel = frames
        else:
            ex = build_example(rec, template, model.vocab)
        examples.append(ex)
    return examples


def batch_loss(model, examples, ctx: ForwardContext):
    inputs, labels, mask, mels, splice_map = assemble_batch(examples, model.vocab)
    logits = model.forward_batch(inputs, mels, splice_map, ctx)
    return T.cross_entropy_nll(logits, labels, mask), int(mask.sum())


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def train(
    model,
    train_sets: dict,
    val_sets: dict,
    cfg: TrainConfig,
    mix: MixWeights,
    phase: str,
    run_dir: str,
    mel_cache: MelCache,
    transcripts_pseudo: bool = False,
    log_every: int = 1,
) -> dict:
    """Run one training phase and leave checkpoints + metrics in run_dir."""
    if phase not in ("aux", "main"):
        raise ContractError(f"phase must be 'aux' or 'main', got {phase!r}")
    if phase == "main" and not transcripts_pseudo:
        raise ContractError("main phase requires pseudo-labeled VT/DDSD transcripts")
    os.makedirs(run_dir, exist_ok=True)
    model.set_trainable(cfg.trainable)
    batch_rng = rng_for(cfg.seed, f"{phase}.batch")
    tmpl_rng = rng_for(cfg.seed, f"{phase}.templates")
    drop_rng = rng_for(cfg.seed, f"{phase}.dropout")
    val_rng = rng_for(cfg.seed, f"{phase}.val")

    val_batchs = []
    if val_sets and any(val_sets.get(t) for t in val_sets):
        pairs = sample_batch(val_sets, mix, val_rng, cfg.val_examples)
        vb = _build_examples(model, pairs, phase, mel_cache, val_rng)
        for i in range(0, len(vb), cfg.batch_size):
            val_batchs.append(vb[i : i + cfg.batch_size])

    state = OptimizerState()
    ckpt = os.path.join(run_dir, "model.bin")
    lora_ckpt = os.path.join(run_dir, "lora.bin")
    log_path = os.path.join(run_dir, "metrics.jsonl")
    skipped = 0
    last_loss = float("nan")
    t0 = time.time()
    with open(log_path, "w") as log:
        for step in range(cfg.steps):
            lr = lr_at(step, cfg)
            batch = sample_batch(train_sets, mix, batch_rng, cfg.batch_size)
            examples = _build_examples(model, batch, phase, mel_cache, tmpl_rng)
            ctx = ForwardContext(rng=drop_rng, training=True)
            with Tape() as tape:
                loss, n_tok = batch_loss(model, examples, ctx)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    log.write(json.dumps({"step": step, "event": "abort", "loss": loss_val}) + "\n")
                    raise TrainAbort(f"non-finite loss at step {step}; last checkpoint kept")
                tape.backward(loss)
            trainables = dict(model.trainable_items())
            grads = {}
            finite = True
            for name, p in trainables.items():
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                if not np.all(np.isfinite(g)):
                    finite = False
                grads[name] = g
                p.grad = None
            if not finite:
                skipped += 1
                grad_norm = float("nan")
            else:
                grads, grad_norm = clip_gradients(grads, cfg.clip_norm)
                adamw_step(trainables, grads, state, cfg, lr)
            last_loss = loss_val
            if step % log_every == 0 or step == cfg.steps - 1:
                counts = {}
                for task, _ in batch:
                    counts[task] = counts.get(task, 0) + 1
                log.write(
                    json.dumps(
                        {
                            "step": step,
                            "lr": lr,
                            "loss": round(loss_val, 6),
                            "grad_norm": round(grad_norm, 6) if np.isfinite(grad_norm) else None,
                            "tokens": n_tok,
                            "skipped": skipped,
                            "mix": counts,
                        }
                    )
                    + "\n"
                )
            if val_batchs and (step + 1) % cfg.val_every == 0:
                vl = validation_loss(model, val_batchs)
                log.write(json.dumps({"step": step, "val_loss": round(vl, 6)}) + "\n")
                model.save(ckpt, lora_ckpt)
    model.save(ckpt, lora_ckpt)
    wall = time.time() - t0
    summary = {
        "phase": phase,
        "steps": cfg.steps,
        "final_loss": last_loss,
        "skipped_steps": skipped,
        "wall_seconds": round(wall, 2),
    }
    with open(os.path.join(run_dir, "train_summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return summary


def validation_loss(model, val_batchs) -> float:
    total, tokens = 0.0, 0
    for vb in val_batchs:
        loss, n = batch_loss(model, vb, ForwardContext())
        total += loss.item() * n
        tokens += n
    return total / max(tokens, 1)
