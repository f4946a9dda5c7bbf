"""Task prompts, synthetic corpus generation, example building, task mixing.

The synthetic corpus stands in for production traffic: every vocabulary
word gets an injective two-sine tone signature, trigger-positive queries
begin with the trigger phrase's audio, and undirected speech is side-talk
phrasing overlaid with babble noise. All generation is a pure function of
the spec and its seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .audio import MelConfig, Waveform, hz_to_mel, load_audio, log_mel, mel_to_hz, save_wav
from .errors import ConfigError, ContractError, DataError
from .vocab import TokenSequence, Vocabulary

TASKS = ("vt", "ddsd", "asr", "text_ddsd", "da")
DA_CLASSES = ("question", "command", "statement")


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    prompt: str
    parts: tuple  # target serialization order: subset of asr/vt/dd/da
    audio: bool = True
    inline_transcript: bool = False
    task_id: int | None = None  # primary prompt number, if any


TEMPLATES = {
    "asr": PromptTemplate("asr", "What does the person say?", ("asr",), task_id=1),
    # rows 2 and 5 of the primary prompt set are the same ASR+DA prompt;
    # it is stored once.
    "asr_da": PromptTemplate(
        "asr_da",
        "What does the person say and what type of dialog act is this?",
        ("asr", "da"),
        task_id=2,
    ),
    "asr_vt": PromptTemplate(
        "asr_vt",
        "What does the person say and does this query contain the trigger phrase?",
        ("asr", "vt"),
        task_id=3,
    ),
    "asr_dd": PromptTemplate(
        "asr_dd",
        "What does the person say and is this query directed towards a virtual assistant?",
        ("asr", "dd"),
        task_id=4,
    ),
    "vt_da": PromptTemplate(
        "vt_da",
        "Does this query contain the trigger phrase and what type of dialog act is this?",
        ("vt", "da"),
        task_id=6,
    ),
    # auxiliary-phase variants: the same questions without the ASR part
    "vt": PromptTemplate("vt", "Does this query contain the trigger phrase?", ("vt",)),
    "dd": PromptTemplate("dd", "Is this query directed towards a virtual assistant?", ("dd",)),
    "da": PromptTemplate("da", "What type of dialog act is this?", ("da",)),
    # text-only directedness: the transcript is inlined as text context
    "text_dd": PromptTemplate(
        "text_dd",
        "Is this query directed towards a virtual assistant?",
        ("dd",),
        audio=False,
        inline_transcript=True,
    ),
}


def template_for(task: str, phase: str, rng: np.random.Generator) -> PromptTemplate:
    """Pick the prompt used for a sampled task in the given training phase."""
    if task == "asr":
        return TEMPLATES["asr"]
    if task == "text_ddsd":
        return TEMPLATES["text_dd"]
    if task == "da":
        # alternate between the two DA-bearing prompts
        if phase == "main":
            return TEMPLATES["asr_da"] if rng.random() < 0.5 else TEMPLATES["vt_da"]
        return TEMPLATES["da"] if rng.random() < 0.5 else TEMPLATES["vt_da"]
    if task == "vt":
        return TEMPLATES["asr_vt"] if phase == "main" else TEMPLATES["vt"]
    if task == "ddsd":
        return TEMPLATES["asr_dd"] if phase == "main" else TEMPLATES["dd"]
    raise ConfigError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# records and manifests
# ---------------------------------------------------------------------------


@dataclass
class QueryRecord:
    id: str
    audio_path: str | None
    transcript: str
    vt_label: str  # yes | no
    dd_label: str  # yes | no
    da_label: str  # question | command | statement
    split: str  # train | val | test
    corpus: str  # vt | ddsd | asr | text_ddsd | da

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def save_manifest(records, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")
    os.replace(tmp, path)


def load_manifest(path: str) -> list:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(QueryRecord(**json.loads(line)))
    return records


def records_by_task(records, split: str) -> dict:
    """Bucket a manifest into per-task record lists for one split."""
    out = {t: [] for t in TASKS}
    for rec in records:
        if rec.split == split:
            out[rec.corpus].append(rec)
    return out


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

TRIGGER_WORDS = ("hey", "device")
NOUNS = ("lamp", "door", "music", "timer", "clock", "light", "oven", "fan", "phone", "alarm")
COMMAND_TEMPLATES = (
    "set the {n}",
    "stop the {n}",
    "start the {n}",
    "open the {n}",
    "close the {n}",
    "play the {n}",
    "turn on the {n}",
    "turn off the {n}",
    "dim the {n}",
)
QUESTION_TEMPLATES = (
    "what is the {n}",
    "where is the {n}",
    "where is my {n}",
    "is the {n} on",
    "is the {n} off",
    "when is the {n} on",
)
STATEMENT_TEMPLATES = (
    "he said the {n} was nice",
    "she said my {n} is funny",
    "maybe the {n} was on today",
    "he was nice today",
    "she said that was funny",
    "maybe that {n} is nice",
)

_TEMPLATE_WORDS = set()
for _t in COMMAND_TEMPLATES + QUESTION_TEMPLATES + STATEMENT_TEMPLATES:
    _TEMPLATE_WORDS.update(w for w in _t.split() if w != "{n}")

DEFAULT_WORDS = tuple(sorted(set(TRIGGER_WORDS) | set(NOUNS) | _TEMPLATE_WORDS))


@dataclass
class SyntheticSpec:
    seed: int = 0
    words: tuple = DEFAULT_WORDS
    trigger_phrase: str = "hey device"
    sample_rate: int = 16000
    word_duration: float = 0.10
    word_gap: float = 0.02
    f1_lo: float = 400.0
    f1_hi: float = 3000.0
    f2_lo: float = 3400.0
    f2_hi: float = 7000.0
    babble_voices: int = 4
    babble_db: float = -6.0
    vt_positive_prior: float = 0.5
    dd_positive_prior: float = 0.5
    trigger_rate_directed: float = 0.3
    # records per (corpus, split)
    counts: dict = field(
        default_factory=lambda: {
            "vt": (600, 60, 150),
            "ddsd": (600, 60, 150),
            "asr": (500, 50, 125),
            "text_ddsd": (150, 15, 40),
            "da": (150, 15, 35),
        }
    )

    def __post_init__(self):
        for w in self.trigger_phrase.split():
            if w not in self.words:
                raise ConfigError(f"trigger word {w!r} missing from the word list")


def word_frequencies(spec: SyntheticSpec) -> dict:
    """Injective word -> (f1, f2) map on a grid of mel-separated tones.

    Each word gets a unique (low, high) tone pair; grid points are spaced
    equally in mel, several filterbank bins apart, so every word stays
    distinguishable after the log-Mel frontend.
    """
    words = sorted(spec.words)
    n = len(words)
    n1 = int(np.ceil(np.sqrt(n)))
    n2 = int(np.ceil(n / n1))
    f1s = mel_to_hz(np.linspace(hz_to_mel(spec.f1_lo), hz_to_mel(spec.f1_hi), n1))
    f2s = mel_to_hz(np.linspace(hz_to_mel(spec.f2_lo), hz_to_mel(spec.f2_hi), n2))
    return {w: (float(f1s[i % n1]), float(f2s[i // n1])) for i, w in enumerate(words)}


def _word_signal(word: str, spec: SyntheticSpec, freqs: dict) -> np.ndarray:
    n = int(round(spec.word_duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    f1, f2 = freqs[word]
    sig = 0.45 * np.sin(2 * np.pi * f1 * t) + 0.45 * np.sin(2 * np.pi * f2 * t)
    ramp = max(1, int(0.005 * spec.sample_rate))
    env = np.ones(n)
    env[:ramp] = np.linspace(0.0, 1.0, ramp)
    env[-ramp:] = np.linspace(1.0, 0.0, ramp)
    return sig * env


def synth_utterance(transcript: str, spec: SyntheticSpec, freqs: dict, rng, babble: bool) -> np.ndarray:
    """Render a transcript as concatenated word signatures, plus optional babble."""
    gap = np.zeros(int(round(spec.word_gap * spec.sample_rate)))
    parts = []
    for w in transcript.split():
        parts.append(_word_signal(w, spec, freqs))
        parts.append(gap)
    sig = np.concatenate(parts[:-1]) if parts else np.zeros(spec.sample_rate // 10)
    if babble:
        noise = np.zeros_like(sig)
        words = sorted(spec.words)
        for _ in range(spec.babble_voices):
            w = words[rng.integers(len(words))]
            ws = _word_signal(w, spec, freqs)
            start = int(rng.integers(max(1, sig.size - ws.size + 1)))
            seg = ws[: sig.size - start]
            noise[start : start + seg.size] += seg
        n_rms = np.sqrt(np.mean(noise**2))
        if n_rms > 0:
            target = np.sqrt(np.mean(sig**2)) * 10.0 ** (spec.babble_db / 20.0)
            noise *= target / n_rms
        sig = sig + noise
    peak = np.abs(sig).max()
    if peak > 0.95:
        sig = sig * (0.95 / peak)
    return sig.astype(np.float32)


def _phrase(kind: str, rng) -> str:
    pool = {"command": COMMAND_TEMPLATES, "question": QUESTION_TEMPLATES, "statement": STATEMENT_TEMPLATES}[kind]
    t = pool[rng.integers(len(pool))]
    return t.replace("{n}", NOUNS[rng.integers(len(NOUNS))])


def _draw_record(corpus: str, spec: SyntheticSpec, rng) -> dict:
    """Transcript and labels for one record; audio flags decided here too."""
    if corpus == "vt":
        positive = rng.random() < spec.vt_positive_prior
        if positive:
            kind = ("command", "question")[rng.integers(2)]
            text = spec.trigger_phrase + " " + _phrase(kind, rng)
        else:
            kind = ("command", "question", "statement")[rng.integers(3)]
            text = _phrase(kind, rng)
        directed = kind != "statement"
    elif corpus in ("ddsd", "text_ddsd"):
        directed = rng.random() < spec.dd_positive_prior
        if directed:
            kind = ("command", "question")[rng.integers(2)]
            text = _phrase(kind, rng)
            if rng.random() < spec.trigger_rate_directed:
                text = spec.trigger_phrase + " " + text
        else:
            kind = "statement"
            text = _phrase(kind, rng)
    elif corpus == "asr":
        kind = ("command", "question")[rng.integers(2)]
        text = _phrase(kind, rng)
        if rng.random() < spec.trigger_rate_directed:
            text = spec.trigger_phrase + " " + text
        directed = True
    elif corpus == "da":
        kind = DA_CLASSES[rng.integers(3)]
        text = _phrase(kind, rng)
        directed = kind != "statement"
        if directed and rng.random() < spec.trigger_rate_directed:
            text = spec.trigger_phrase + " " + text
    else:
        raise ConfigError(f"unknown corpus {corpus!r}")
    return {
        "transcript": text,
        "vt_label": "yes" if text.startswith(spec.trigger_phrase) else "no",
        "dd_label": "yes" if directed else "no",
        "da_label": kind,
    }


def generate_corpus(spec: SyntheticSpec, out_dir: str, write_audio: bool = True) -> list:
    """Generate records and WAVs under ``out_dir``; deterministic in the seed.

    With ``write_audio=False`` only the manifest is produced (labels and
    transcripts are unchanged) — useful for prior checks on large draws.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xDA7A]))
    freqs = word_frequencies(spec)
    os.makedirs(out_dir, exist_ok=True)
    wav_dir = os.path.join(out_dir, "wavs")
    if write_audio:
        os.makedirs(wav_dir, exist_ok=True)
    records = []
    for corpus in TASKS:
        n_by_split = dict(zip(("train", "val", "test"), spec.counts.get(corpus, (0, 0, 0))))
        for split in ("train", "val", "test"):
            for i in range(n_by_split[split]):
                fields = _draw_record(corpus, spec, rng)
                rec_id = f"{corpus}-{split}-{i:05d}"
                has_audio = corpus != "text_ddsd"
                audio_path = None
                if has_audio:
                    babble = fields["dd_label"] == "no"
                    sig = synth_utterance(fields["transcript"], spec, freqs, rng, babble)
                    audio_path = os.path.join("wavs", rec_id + ".wav")
                    if write_audio:
                        save_wav(os.path.join(out_dir, audio_path), sig, spec.sample_rate)
                records.append(
                    QueryRecord(id=rec_id, audio_path=audio_path, split=split, corpus=corpus, **fields)
                )
    save_manifest(records, os.path.join(out_dir, "manifest.jsonl"))
    return records


class MelCache:
    """Lazily computed, memoized log-Mel features keyed by record id."""

    def __init__(self, data_dir: str, mel_cfg: MelConfig):
        self.data_dir = data_dir
        self.mel_cfg = mel_cfg
        self._cache: dict[str, np.ndarray] = {}

    def frames(self, rec: QueryRecord) -> np.ndarray:
        if rec.audio_path is None:
            raise DataError(f"record {rec.id} has no audio")
        if rec.id not in self._cache:
            w = load_audio(os.path.join(self.data_dir, rec.audio_path))
            self._cache[rec.id] = log_mel(w, self.mel_cfg).frames
        return self._cache[rec.id]


# ---------------------------------------------------------------------------
# example building
# ---------------------------------------------------------------------------


@dataclass
class BuiltExample:
    tokens: TokenSequence  # prompt + target, with audio span when present
    target_ids: list
    loss_mask: np.ndarray  # same length as tokens; 1 exactly on target positions
    record_id: str = ""
    mel: np.ndarray | None = None  # attached by the data pipeline for audio prompts


def _target_ids(rec: QueryRecord, parts, vocab: Vocabulary) -> list:
    ids: list[int] = []
    yn = {"yes": vocab.yes, "no": vocab.no}
    classes = vocab.da_class_ids()
    for part in parts:
        if part == "asr":
            ids.extend(vocab.tokenize(rec.transcript).ids)
        elif part == "vt":
            ids.extend([vocab.vt, yn[rec.vt_label]])
        elif part == "dd":
            ids.extend([vocab.dd, yn[rec.dd_label]])
        elif part == "da":
            ids.extend([vocab.da, classes[rec.da_label]])
        else:
            raise ConfigError(f"unknown target part {part!r}")
    ids.append(vocab.endoftext)
    return ids


def build_prompt(rec: QueryRecord, template: PromptTemplate, vocab: Vocabulary, audio_len: int | None = None) -> TokenSequence:
    """Context-only token sequence (everything the model sees before the target)."""
    if template.audio:
        if rec.audio_path is None:
            raise DataError(f"template {template.name!r} needs audio but record {rec.id} has none")
        if audio_len is None or audio_len < 1:
            raise ContractError("audio templates need the bridged audio length")
        ids = [vocab.audio_start] + [vocab.audio_pad] * audio_len + [vocab.audio_end]
        span = (1, audio_len)
        ids.extend(vocab.tokenize(template.prompt + "\n").ids)
    else:
        text = ""
        if template.inline_transcript:
            if not rec.transcript:
                raise DataError(f"record {rec.id} has no transcript for a text-context template")
            text = rec.transcript + "\n"
        ids = vocab.tokenize(text + template.prompt + "\n").ids
        span = None
    return TokenSequence(ids=ids, audio_span=span)


def build_example(rec: QueryRecord, template: PromptTemplate, vocab: Vocabulary, audio_len: int | None = None) -> BuiltExample:
    """Prompt plus serialized target with a loss mask over target tokens only."""
    if "asr" in template.parts and not rec.transcript:
        raise DataError(f"record {rec.id} lacks a transcript for template {template.name!r}")
    prompt = build_prompt(rec, template, vocab, audio_len)
    target = _target_ids(rec, template.parts, vocab)
    ids = prompt.ids + target
    mask = np.zeros(len(ids), dtype=np.float32)
    mask[len(prompt.ids) :] = 1.0
    return BuiltExample(
        tokens=TokenSequence(ids=ids, audio_span=prompt.audio_span),
        target_ids=target,
        loss_mask=mask,
        record_id=rec.id,
    )


# ---------------------------------------------------------------------------
# task mixing
# ---------------------------------------------------------------------------


@dataclass
class MixWeights:
    vt: float = 0.15
    ddsd: float = 0.35
    asr: float = 0.30
    text_ddsd: float = 0.05
    da: float = 0.15

    def as_dict(self) -> dict:
        return {t: getattr(self, t) for t in TASKS}

    def __post_init__(self):
        total = sum(self.as_dict().values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"mix weights sum to {total}, expected 1.0")


def sample_batch(datasets: dict, weights: MixWeights, rng: np.random.Generator, batch_size: int) -> list:
    """Draw (task, record) pairs i.i.d. from the task weights."""
    w = weights.as_dict()
    tasks = [t for t in TASKS if w[t] > 0.0]
    for t in tasks:
        if not datasets.get(t):
            raise ConfigError(f"task {t!r} has weight {w[t]} but no records")
    probs = np.array([w[t] for t in tasks])
    probs = probs / probs.sum()
    picks = rng.choice(len(tasks), size=batch_size, p=probs)
    batch = []
    for k in picks:
        task = tasks[int(k)]
        ds = datasets[task]
        batch.append((task, ds[int(rng.integers(len(ds)))]))
    return batch


# ---------------------------------------------------------------------------
# pseudo-labeling bootstrap
# ---------------------------------------------------------------------------


def pseudo_label(transcribe, records) -> tuple[list, list]:
    """Replace transcripts by a transcriber's greedy output.

    ``transcribe(record)`` returns the hypothesis text or raises/returns
    None on failure. Returns (relabeled records, flagged record ids);
    flagged records are excluded, not silently empty-labeled.
    """
    relabeled = []
    flagged = []
    for rec in records:
        try:
            text = transcribe(rec)
        except Exception:
            text = None
        if text is None or not text.strip():
            flagged.append(rec.id)
            continue
        fields = asdict(rec)
        fields["transcript"] = text.strip()
        relabeled.append(QueryRecord(**fields))
    return relabeled, flagged
