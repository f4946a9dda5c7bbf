"""Flat key=value run configuration: parse, validate, echo.

Keys use section prefixes (``encoder.d_model=128``). Unknown keys are
errors. Every run writes back the fully-resolved config so a run directory
is self-describing. Environment variables with the ``VALET_`` prefix
override file values for CI (double underscore stands for the dot:
``VALET_PATHS__RUN_DIR=/tmp/x``).
"""

from __future__ import annotations

import os

from .audio import MelConfig
from .bridge import BridgeConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .inference import GenerationConfig
from .lm import LMConfig
from .lora import LoRAConfig
from .model import ModelConfig
from .taskdata import MixWeights, SyntheticSpec
from .trainer import TrainConfig

ENV_PREFIX = "VALET_"


def _int_tuple(s: str) -> tuple:
    return tuple(int(x) for x in str(s).split(",") if x != "")


def _str_tuple(s: str) -> tuple:
    return tuple(x.strip() for x in str(s).split(",") if x.strip())


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "paths.data_dir": (str, "runs/data"),
    "paths.run_dir": (str, "runs/run"),
    # synthetic corpus
    "data.trigger_phrase": (str, "hey device"),
    "data.word_duration": (float, 0.10),
    "data.word_gap": (float, 0.02),
    "data.babble_voices": (int, 4),
    "data.babble_db": (float, -6.0),
    "data.vt_positive_prior": (float, 0.5),
    "data.dd_positive_prior": (float, 0.5),
    "data.trigger_rate_directed": (float, 0.3),
    "data.counts.vt": (_int_tuple, (600, 60, 150)),
    "data.counts.ddsd": (_int_tuple, (600, 60, 150)),
    "data.counts.asr": (_int_tuple, (500, 50, 125)),
    "data.counts.text_ddsd": (_int_tuple, (150, 15, 40)),
    "data.counts.da": (_int_tuple, (150, 15, 35)),
    # features
    "mel.n_mels": (int, 80),
    "mel.window": (int, 400),
    "mel.hop": (int, 160),
    # encoder
    "encoder.n_layers": (int, 4),
    "encoder.d_model": (int, 128),
    "encoder.n_heads": (int, 4),
    "encoder.max_frames": (int, 1500),
    "encoder.conv_kernels": (_int_tuple, (3, 3)),
    "encoder.conv_strides": (_int_tuple, (1, 2)),
    # language model
    "lm.n_layers": (int, 4),
    "lm.d_model": (int, 128),
    "lm.n_heads": (int, 4),
    "lm.context_len": (int, 1024),
    # bridge
    "bridge.mode": (str, "pooled_plus_sequence"),
    "bridge.gating": (_bool, False),
    # adapters
    "lora.rank": (int, 8),
    "lora.alpha": (float, 32.0),
    "lora.dropout": (float, 0.1),
    "lora.projections": (_str_tuple, ("query", "value")),
    # task mix
    "mix.vt": (float, 0.15),
    "mix.ddsd": (float, 0.35),
    "mix.asr": (float, 0.30),
    "mix.text_ddsd": (float, 0.05),
    "mix.da": (float, 0.15),
    # optimization
    "train.steps": (int, 3000),
    "train.aux_steps": (int, 1200),
    "train.batch_size": (int, 16),
    "train.lr": (float, 2e-4),
    "train.beta1": (float, 0.99),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.weight_decay": (float, 1e-4),
    "train.warmup_frac": (float, 0.10),
    "train.clip_norm": (float, 1.0),
    "train.val_every": (int, 200),
    "train.val_examples": (int, 48),
    "train.trainable": (_str_tuple, ("lora", "gate", "proj", "head", "embed", "norm")),
    # decoding
    "decode.max_new_tokens": (int, 256),
    "decode.workers": (int, 1),
}


class RunConfig:
    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_file(cls, path: str, overrides: dict | None = None) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        raw: dict = {}
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                raw[key.strip()] = value.strip()
        raw.update(_env_overrides())
        raw.update(overrides or {})
        return cls.resolve(raw)

    @classmethod
    def resolve(cls, raw: dict) -> "RunConfig":
        values = {}
        for key, value in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key: {key}")
            parser, _default = SCHEMA[key]
            try:
                values[key] = parser(value)
            except ConfigError:
                raise
            except Exception as e:
                raise ConfigError(f"bad value for {key}: {value!r} ({e})") from None
        for key, (_parser, default) in SCHEMA.items():
            values.setdefault(key, default)
        return cls(values)

    def echo(self, path: str) -> None:
        """Write the fully-resolved configuration."""
        with open(path, "w") as f:
            for key in sorted(self.values):
                v = self.values[key]
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                f.write(f"{key}={v}\n")

    # -- typed views -------------------------------------------------------

    def synthetic_spec(self) -> SyntheticSpec:
        v = self.values
        return SyntheticSpec(
            seed=v["seed"],
            trigger_phrase=v["data.trigger_phrase"],
            word_duration=v["data.word_duration"],
            word_gap=v["data.word_gap"],
            babble_voices=v["data.babble_voices"],
            babble_db=v["data.babble_db"],
            vt_positive_prior=v["data.vt_positive_prior"],
            dd_positive_prior=v["data.dd_positive_prior"],
            trigger_rate_directed=v["data.trigger_rate_directed"],
            counts={
                "vt": v["data.counts.vt"],
                "ddsd": v["data.counts.ddsd"],
                "asr": v["data.counts.asr"],
                "text_ddsd": v["data.counts.text_ddsd"],
                "da": v["data.counts.da"],
            },
        )

    def mel_config(self) -> MelConfig:
        v = self.values
        return MelConfig(n_mels=v["mel.n_mels"], window=v["mel.window"], hop=v["mel.hop"])

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            encoder=EncoderConfig(
                n_layers=v["encoder.n_layers"],
                d_model=v["encoder.d_model"],
                n_heads=v["encoder.n_heads"],
                n_mels=v["mel.n_mels"],
                conv_kernels=v["encoder.conv_kernels"],
                conv_strides=v["encoder.conv_strides"],
                max_frames=v["encoder.max_frames"],
            ),
            lm=LMConfig(
                n_layers=v["lm.n_layers"],
                d_model=v["lm.d_model"],
                n_heads=v["lm.n_heads"],
                context_len=v["lm.context_len"],
            ),
            bridge=BridgeConfig(mode=v["bridge.mode"], gating=v["bridge.gating"]),
            mel=self.mel_config(),
        )

    def lora_config(self) -> LoRAConfig:
        v = self.values
        return LoRAConfig(
            rank=v["lora.rank"],
            alpha=v["lora.alpha"],
            dropout_p=v["lora.dropout"],
            projections=v["lora.projections"],
        )

    def mix(self) -> MixWeights:
        v = self.values
        return MixWeights(
            vt=v["mix.vt"],
            ddsd=v["mix.ddsd"],
            asr=v["mix.asr"],
            text_ddsd=v["mix.text_ddsd"],
            da=v["mix.da"],
        )

    def train_config(self, phase: str) -> TrainConfig:
        v = self.values
        return TrainConfig(
            lr=v["train.lr"],
            beta1=v["train.beta1"],
            beta2=v["train.beta2"],
            eps=v["train.eps"],
            weight_decay=v["train.weight_decay"],
            warmup_frac=v["train.warmup_frac"],
            clip_norm=v["train.clip_norm"],
            steps=v["train.aux_steps"] if phase == "aux" else v["train.steps"],
            batch_size=v["train.batch_size"],
            seed=v["seed"],
            val_every=v["train.val_every"],
            val_examples=v["train.val_examples"],
            trainable=v["train.trainable"],
        )

    def generation_config(self) -> GenerationConfig:
        return GenerationConfig(max_new_tokens=self.values["decode.max_new_tokens"])


def _env_overrides() -> dict:
    out = {}
    for name, value in os.environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
            out[key] = value
    return out
