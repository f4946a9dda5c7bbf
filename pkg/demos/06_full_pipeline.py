"""The whole pipeline at miniature scale, via the CLI commands.

gen-data -> train-aux -> pseudo-label -> train -> decode -> eval in about
a minute. For the real desk-scale run use configs/e2e_small.cfg instead.
"""

import os
import tempfile
import time

from valet.cli import main

CFG = """
seed=3
mel.n_mels=40
encoder.n_layers=1
encoder.d_model=48
encoder.n_heads=4
encoder.max_frames=256
lm.n_layers=1
lm.d_model=48
lm.n_heads=4
lm.context_len=320
train.steps=120
train.aux_steps=60
train.batch_size=8
train.lr=4e-3
train.val_every=60
train.val_examples=8
decode.max_new_tokens=48
data.counts.vt=40,6,10
data.counts.ddsd=40,6,10
data.counts.asr=30,6,10
data.counts.text_ddsd=10,2,4
data.counts.da=10,2,4
"""

work = tempfile.mkdtemp(prefix="pipeline-")
cfg_path = os.path.join(work, "mini.cfg")
with open(cfg_path, "w") as f:
    f.write(CFG + f"\npaths.data_dir={work}/data\npaths.run_dir={work}/run\n")

for command in ("gen-data", "train-aux", "pseudo-label", "train", "decode", "eval"):
    t0 = time.time()
    rc = main([command, "--config", cfg_path])
    print(f"  [{command}: {time.time() - t0:.1f}s, rc={rc}]\n")
    assert rc == 0

print("artifacts in", work)
for name in ("data/manifest.jsonl", "data/pseudo_stats.json", "run/decode.jsonl", "run/eval/summary.txt"):
    print(" ", name)
