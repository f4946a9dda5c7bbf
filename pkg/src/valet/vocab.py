"""Byte-level vocabulary with atomic special and answer tokens.

Ids 0..255 are raw bytes. Marker tokens use ``<|name|>`` syntax; answer
words (yes/no) and dialog-act class names are single atomic tokens so a
binary decision is always a one-step score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError, FormatError

N_BYTES = 256

# order defines ids 256..; append only
MARKER_TOKENS = [
    "<|audio_start|>",
    "<|audio_pad|>",
    "<|audio_end|>",
    "<|VT|>",
    "<|DD|>",
    "<|DA|>",
    "<|endoftext|>",
    "<|pad|>",
]
ANSWER_TOKENS = ["yes", "no"]
DA_CLASS_TOKENS = ["question", "command", "statement"]


@dataclass
class TokenSequence:
    ids: list[int]
    audio_span: tuple[int, int] | None = None  # (start, len) of <|audio_pad|> run

    def __len__(self):
        return len(self.ids)


@dataclass
class Vocabulary:
    specials: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.specials:
            names = MARKER_TOKENS + ANSWER_TOKENS + DA_CLASS_TOKENS
            self.specials = {name: N_BYTES + i for i, name in enumerate(names)}
        self._by_id = {i: name for name, i in self.specials.items()}

    def __len__(self):
        return N_BYTES + len(self.specials)

    @property
    def size(self) -> int:
        return len(self)

    def id_of(self, token: str) -> int:
        """Atomic id of a special/answer/class token."""
        try:
            return self.specials[token]
        except KeyError:
            raise ContractError(f"not an atomic token: {token!r}") from None

    @property
    def audio_start(self):
        return self.specials["<|audio_start|>"]

    @property
    def audio_pad(self):
        return self.specials["<|audio_pad|>"]

    @property
    def audio_end(self):
        return self.specials["<|audio_end|>"]

    @property
    def vt(self):
        return self.specials["<|VT|>"]

    @property
    def dd(self):
        return self.specials["<|DD|>"]

    @property
    def da(self):
        return self.specials["<|DA|>"]

    @property
    def endoftext(self):
        return self.specials["<|endoftext|>"]

    @property
    def pad(self):
        return self.specials["<|pad|>"]

    @property
    def yes(self):
        return self.specials["yes"]

    @property
    def no(self):
        return self.specials["no"]

    def da_class_ids(self) -> dict[str, int]:
        return {name: self.specials[name] for name in DA_CLASS_TOKENS}

    def tokenize(self, text: str) -> TokenSequence:
        """UTF-8 bytes, with ``<|name|>`` spans mapped to their atomic ids.

        Unknown ``<|...|>`` markers are a parse error; tokenize/detokenize
        round-trips any text that contains no marker syntax.
        """
        ids: list[int] = []
        i = 0
        while i < len(text):
            if text.startswith("<|", i):
                end = text.find("|>", i + 2)
                if end < 0:
                    raise FormatError(f"unterminated special token at offset {i}")
                name = text[i : end + 2]
                if name not in self.specials:
                    raise FormatError(f"unknown special token {name!r}")
                ids.append(self.specials[name])
                i = end + 2
            else:
                ids.extend(text[i].encode("utf-8"))
                i += 1
        return TokenSequence(ids=ids)

    def detokenize(self, ids) -> str:
        """Inverse of tokenize; byte runs are decoded as UTF-8."""
        out: list[str] = []
        pending: list[int] = []

        def flush():
            if pending:
                out.append(bytes(pending).decode("utf-8", errors="replace"))
                pending.clear()

        for t in ids:
            t = int(t)
            if t < N_BYTES:
                pending.append(t)
            else:
                flush()
                name = self._by_id.get(t)
                if name is None:
                    raise IndexError(f"token id {t} out of vocabulary")
                out.append(name)
        flush()
        return "".join(out)

    def save(self, path: str) -> None:
        """Plain-text (token, id) listing; bytes are written as b'0xNN'."""
        with open(path, "w") as f:
            for i in range(N_BYTES):
                f.write(f"0x{i:02x}\t{i}\n")
            for name, i in sorted(self.specials.items(), key=lambda kv: kv[1]):
                f.write(f"{name}\t{i}\n")
