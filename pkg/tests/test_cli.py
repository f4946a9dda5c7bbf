"""CLI: config errors, idempotent gen-data, and a micro pipeline end to end."""

import json
import os
import subprocess
import sys

import pytest

from valet.cli import main

MICRO_CFG = """
seed=11
mel.n_mels=16
encoder.n_layers=1
encoder.d_model=32
encoder.n_heads=2
encoder.max_frames=160
lm.n_layers=1
lm.d_model=32
lm.n_heads=2
lm.context_len=256
lora.rank=2
train.steps=12
train.aux_steps=8
train.batch_size=4
train.lr=1e-3
train.val_every=6
train.val_examples=4
decode.max_new_tokens=48
data.counts.vt=10,2,3
data.counts.ddsd=10,2,3
data.counts.asr=8,2,3
data.counts.text_ddsd=4,1,2
data.counts.da=4,1,2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = str(root / "micro.cfg")
    lines = MICRO_CFG.strip() + f"\npaths.data_dir={root}/data\npaths.run_dir={root}/run\n"
    open(cfg_path, "w").write(lines)
    return root, cfg_path


def test_gen_data_idempotent(workdir):
    root, cfg = workdir
    assert main(["gen-data", "--config", cfg]) == 0
    first = open(root / "data" / "manifest.jsonl", "rb").read()
    assert main(["gen-data", "--config", cfg]) == 0
    assert open(root / "data" / "manifest.jsonl", "rb").read() == first
    assert os.path.exists(root / "data" / "config.resolved.cfg")


def test_full_micro_pipeline(workdir):
    root, cfg = workdir
    assert main(["train-aux", "--config", cfg]) == 0
    assert os.path.exists(root / "run" / "aux" / "model.bin")
    assert main(["pseudo-label", "--config", cfg]) == 0
    stats = json.load(open(root / "data" / "pseudo_stats.json"))
    assert stats["relabeled"] + stats["flagged"] == 10 + 2 + 10 + 2 + 4 + 1
    assert main(["train", "--config", cfg]) == 0
    assert main(["decode", "--config", cfg]) == 0
    rows = [json.loads(l) for l in open(root / "run" / "decode.jsonl")]
    assert len(rows) == 3 + 3 + 3 + 2 + 2
    assert {r["task"] for r in rows} == {"vt", "ddsd", "asr", "text_ddsd", "da"}
    assert main(["eval", "--config", cfg]) == 0
    summary = json.load(open(root / "run" / "eval" / "summary.json"))
    assert "vt" in summary["tasks"] and "asr" in summary["tasks"]
    assert os.path.exists(root / "run" / "eval" / "det_vt.csv")


def test_eval_without_decode_exits_2(workdir, tmp_path):
    root, cfg = workdir
    rc = main(["eval", "--config", cfg, "--run-dir", str(tmp_path / "empty")])
    assert rc == 2


def test_unknown_config_key_exits_2(tmp_path):
    bad = str(tmp_path / "bad.cfg")
    open(bad, "w").write("lm.depth=3\n")
    assert main(["gen-data", "--config", bad]) == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_console_entrypoint_runs():
    out = subprocess.run(
        [sys.executable, "-m", "valet.cli", "--help"], capture_output=True, text=True
    )
    assert out.returncode == 0
    for cmd in ("gen-data", "train-aux", "pseudo-label", "train", "decode", "eval", "ablate"):
        assert cmd in out.stdout
