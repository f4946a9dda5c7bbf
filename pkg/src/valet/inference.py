"""Greedy generation and per-task decision-score extraction.

Generation is pure argmax with a stop token; the per-step softmax
distributions are kept so that binary decisions can read p(yes) at the
step immediately after the task's marker token.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .vocab import TokenSequence, Vocabulary

TASK_MARKERS = {"vt": "<|VT|>", "ddsd": "<|DD|>", "text_ddsd": "<|DD|>", "da": "<|DA|>"}


@dataclass
class GenerationConfig:
    max_new_tokens: int = 256

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ContractError("max_new_tokens must be >= 1")


@dataclass
class DecodeResult:
    new_ids: list  # generated ids, stop token included when produced
    dists: list  # per-step softmax over the vocabulary (numpy rows)
    truncated: bool = False  # hit the context limit mid-generation


@dataclass
class Decision:
    task: str
    text: str
    score: float | None = None  # p(yes | context) for binary tasks
    diag_mass: float | None = None  # p(yes) + p(no) at the decision step
    renorm_score: float | None = None  # p(yes) / (p(yes) + p(no)), for analysis
    da_class: str | None = None
    flags: list = field(default_factory=list)


def _softmax_row(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def greedy_decode(model, prompt_seq: TokenSequence, mel_frames=None, gen_cfg: GenerationConfig | None = None) -> DecodeResult:
    """Argmax decoding until <|endoftext|> or the new-token budget runs out.

    ``mel_frames`` is the (T, n_mels) feature matrix for audio prompts; the
    encoder/bridge run once and their rows are re-spliced each step.
    """
    gen_cfg = gen_cfg or GenerationConfig()
    vocab: Vocabulary = model.vocab
    bridged = None
    if mel_frames is not None:
        rows, lens = model.bridged_audio([np.asarray(mel_frames)])
        bridged = rows.data[0, : lens[0]]
        span = prompt_seq.audio_span
        if span is None or span[1] != lens[0]:
            have = 0 if span is None else span[1]
            raise ContractError(f"audio span length {have} != bridged rows {lens[0]}")
    ids = list(prompt_seq.ids)
    out = DecodeResult(new_ids=[], dists=[])
    for _ in range(gen_cfg.max_new_tokens):
        if len(ids) >= model.cfg.lm.context_len:
            out.truncated = True
            break
        logits = model.lm_logits(ids, bridged)
        dist = _softmax_row(logits[-1].astype(np.float64))
        nxt = int(dist.argmax())
        out.new_ids.append(nxt)
        out.dists.append(dist)
        ids.append(nxt)
        if nxt == vocab.endoftext:
            break
    return out


def extract_score(result: DecodeResult, task: str, vocab: Vocabulary) -> Decision:
    """Read the task decision out of a generation.

    For binary tasks the score is the probability of the atomic ``yes``
    token at the step immediately following the task marker. A marker that
    never appears is a no-decision (flagged); a different marker than the
    prompted task's is still scored but flagged as task confusion.
    """
    ids = result.new_ids
    text_end = len(ids)
    for i, t in enumerate(ids):
        if t >= 256:
            text_end = i
            break
    text = vocab.detokenize(ids[:text_end]).strip()
    decision = Decision(task=task, text=text)
    if result.truncated:
        decision.flags.append("truncated")
    if task == "asr":
        return decision

    expected = vocab.id_of(TASK_MARKERS[task])
    marker_pos = None
    found_marker = None
    for i, t in enumerate(ids):
        if t in (vocab.vt, vocab.dd, vocab.da):
            marker_pos = i
            found_marker = t
            break
    if marker_pos is None or marker_pos + 1 >= len(result.dists):
        decision.flags.append("no-decision")
        return decision
    if found_marker != expected:
        decision.flags.append("task-confusion")

    dist = result.dists[marker_pos + 1]
    if found_marker == vocab.da:
        classes = vocab.da_class_ids()
        best = max(classes, key=lambda name: dist[classes[name]])
        decision.da_class = best
    else:
        p_yes = float(dist[vocab.yes])
        p_no = float(dist[vocab.no])
        decision.score = p_yes
        decision.diag_mass = p_yes + p_no
        decision.renorm_score = p_yes / (p_yes + p_no) if p_yes + p_no > 0 else 0.0
    # a second marker may follow (e.g. VT then DA in one pass)
    if found_marker != vocab.da:
        for j in range(marker_pos + 1, len(ids)):
            if ids[j] == vocab.da and j + 1 < len(result.dists):
                dist2 = result.dists[j + 1]
                classes = vocab.da_class_ids()
                decision.da_class = max(classes, key=lambda name: dist2[classes[name]])
                break
    return decision
