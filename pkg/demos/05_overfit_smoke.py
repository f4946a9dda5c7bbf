"""Memorization sanity: 50 synthetic examples driven to near-zero loss.

Runs the same setup as the overfit acceptance check (about half a minute)
and prints the loss curve every 20 steps.
"""

import json
import os
import tempfile

from valet.lora import LoRAConfig, attach, default_plan
from valet.model import Model
from valet.runcfg import RunConfig
from valet.seeding import rng_for
from valet.taskdata import MelCache, MixWeights, generate_corpus, records_by_task
from valet.trainer import train

cfg = RunConfig.from_file(os.path.join(os.path.dirname(__file__), "..", "configs", "overfit.cfg"))
work = tempfile.mkdtemp(prefix="overfit-")

records = generate_corpus(cfg.synthetic_spec(), work)
print(f"corpus: {sum(r.split == 'train' for r in records)} training records in {work}")

model = Model.build(cfg.model_config(), rng_for(cfg["seed"], "init.aux"))
attach(model, default_plan(cfg["encoder.n_layers"], cfg["lm.n_layers"]), cfg.lora_config(), rng_for(cfg["seed"], "lora.aux"))

run_dir = os.path.join(work, "run")
summary = train(
    model,
    records_by_task(records, "train"),
    {},
    cfg.train_config("aux"),
    cfg.mix(),
    "aux",
    run_dir,
    MelCache(work, cfg.mel_config()),
)

losses = [json.loads(l) for l in open(os.path.join(run_dir, "metrics.jsonl")) if "loss" in l]
for row in losses[::20] + [losses[-1]]:
    print(f"  step {row['step']:>3}  lr {row['lr']:.2e}  loss {row['loss']:.4f}")
best = min(r["loss"] for r in losses)
print(f"\nbest training loss: {best:.4f} (memorized: {best < 0.1}) in {summary['wall_seconds']}s")
