"""Low-rank adapters: zero-init equivalence, trainable footprint, merging."""

import numpy as np

from valet.lora import LoRAConfig, adapter_param_count, attach, default_plan, merge
from valet.model import Model, ModelConfig
from valet.audio import MelConfig
from valet.encoder import EncoderConfig
from valet.lm import LMConfig
from valet.seeding import rng_for

cfg = ModelConfig(
    encoder=EncoderConfig(n_layers=2, d_model=64, n_heads=4, n_mels=40, max_frames=200),
    lm=LMConfig(n_layers=2, d_model=64, n_heads=4, context_len=256),
    mel=MelConfig(n_mels=40),
)

base = Model.build(cfg, rng_for(0, "init"))
ids = base.vocab.tokenize("Does this query contain the trigger phrase?\n").ids
before = base.lm_logits(ids)

attach(base, default_plan(2, 2), LoRAConfig(rank=8, alpha=32.0), rng_for(0, "lora"))
after = base.lm_logits(ids)
print("bit-identical after attach (B = 0):", np.array_equal(before, after))

base.set_trainable(["lora", "gate"])
print(f"adapter params: {adapter_param_count(base)} of {base.n_params()} total "
      f"({100 * adapter_param_count(base) / base.n_params():.2f}%)")
print("scale alpha/r =", next(iter(base.adapters.values())).scale)

# after (fake) training, adapters fold back into the dense weights
ad = base.adapters["lm.block0.attn.query"]
ad.b.data[:] = rng_for(1, "delta").normal(0, 0.05, ad.b.shape).astype(np.float32)
w = base.params["lm.block0.attn.wq.weight"]
merged = merge(ad, w)
print("merged weight differs from base:", not np.allclose(merged.data, w.data))
