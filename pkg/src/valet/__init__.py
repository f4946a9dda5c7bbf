"""valet: a desk-scale speech-enabled multi-task LM for assistant queries.

One model handles voice-trigger detection, device-directed speech
detection, speech recognition, and dialog-act classification from audio
plus a text prompt. Everything runs on numpy with a small reverse-mode
autodiff tape; training touches only low-rank adapters, the feature gate,
and the configured desk-scale extras.
"""

from .audio import MelConfig, MelSpectrogram, Waveform, load_audio, log_mel
from .bridge import BridgeConfig, apply_bridge, concat_pooled, gate, mean_pool
from .encoder import EncoderConfig, encode
from .evalkit import DETPoint, ScoredTrial, det_sweep, eer, wer
from .inference import Decision, GenerationConfig, extract_score, greedy_decode
from .lm import LMConfig, lm_forward, splice_audio
from .lora import AttachmentPlan, LoRAAdapter, LoRAConfig, attach, default_plan, merge, unmerge
from .model import Model, ModelConfig
from .taskdata import (
    MixWeights,
    PromptTemplate,
    QueryRecord,
    SyntheticSpec,
    TEMPLATES,
    build_example,
    generate_corpus,
    pseudo_label,
    sample_batch,
)
from .tensor import Tape, Tensor, backward
from .trainer import TrainConfig, adamw_step, clip_gradients, lr_at, train
from .vocab import TokenSequence, Vocabulary

__version__ = "0.1.0"

__all__ = [
    "AttachmentPlan",
    "BridgeConfig",
    "DETPoint",
    "Decision",
    "EncoderConfig",
    "GenerationConfig",
    "LMConfig",
    "LoRAAdapter",
    "LoRAConfig",
    "MelConfig",
    "MelSpectrogram",
    "MixWeights",
    "Model",
    "ModelConfig",
    "PromptTemplate",
    "QueryRecord",
    "ScoredTrial",
    "SyntheticSpec",
    "TEMPLATES",
    "Tape",
    "Tensor",
    "TokenSequence",
    "TrainConfig",
    "Vocabulary",
    "Waveform",
    "adamw_step",
    "apply_bridge",
    "attach",
    "backward",
    "build_example",
    "clip_gradients",
    "concat_pooled",
    "default_plan",
    "det_sweep",
    "eer",
    "encode",
    "extract_score",
    "gate",
    "generate_corpus",
    "greedy_decode",
    "lm_forward",
    "load_audio",
    "log_mel",
    "lr_at",
    "mean_pool",
    "merge",
    "pseudo_label",
    "sample_batch",
    "splice_audio",
    "train",
    "unmerge",
    "wer",
]
