"""Command-line pipeline: data generation, two-phase training, decoding, eval.

Every command takes ``--config`` (flat key=value file), validates it,
echoes the resolved config into its output directory, and is idempotent
given the same config and seed. Exit code 2 means a configuration problem
(the message names the offending key or file); 1 is a runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import evalkit
from .errors import ConfigError
from .inference import extract_score, greedy_decode
from .model import Model
from .runcfg import RunConfig
from .seeding import rng_for
from .taskdata import (
    TEMPLATES,
    MelCache,
    build_prompt,
    generate_corpus,
    load_manifest,
    pseudo_label,
    records_by_task,
    save_manifest,
)
from .trainer import train
from .lora import LoRAConfig, attach, default_plan

PSEUDO_CORPORA = ("vt", "ddsd", "da")  # corpora whose transcripts come from the aux model
DECODE_TEMPLATE = {"vt": "asr_vt", "ddsd": "asr_dd", "asr": "asr", "text_ddsd": "text_dd", "da": "asr_da"}


def _load_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "run_dir", None):
        overrides["paths.run_dir"] = args.run_dir
    if getattr(args, "data_dir", None):
        overrides["paths.data_dir"] = args.data_dir
    return RunConfig.from_file(args.config, overrides)


def _build_model(cfg: RunConfig, phase: str) -> Model:
    model = Model.build(cfg.model_config(), rng_for(cfg["seed"], f"init.{phase}"))
    plan = default_plan(cfg["encoder.n_layers"], cfg["lm.n_layers"], cfg["lora.projections"])
    attach(model, plan, cfg.lora_config(), rng_for(cfg["seed"], f"lora.{phase}"))
    return model


def _make_transcriber(model: Model, mel_cache: MelCache, gen_cfg):
    template = TEMPLATES["asr"]

    def transcribe(rec):
        frames = mel_cache.frames(rec)
        audio_len = model.bridged_len_for_frames(frames.shape[0])
        prompt = build_prompt(rec, template, model.vocab, audio_len)
        result = greedy_decode(model, prompt, frames, gen_cfg)
        return extract_score(result, "asr", model.vocab).text

    return transcribe


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    data_dir = cfg["paths.data_dir"]
    records = generate_corpus(cfg.synthetic_spec(), data_dir)
    cfg.echo(os.path.join(data_dir, "config.resolved.cfg"))
    by_split = {}
    for rec in records:
        by_split[rec.split] = by_split.get(rec.split, 0) + 1
    print(f"generated {len(records)} records into {data_dir} ({by_split})")
    return 0


def cmd_train_aux(args) -> int:
    cfg = _load_config(args)
    run_dir = cfg["paths.run_dir"]
    os.makedirs(run_dir, exist_ok=True)
    cfg.echo(os.path.join(run_dir, "config.resolved.cfg"))
    records = load_manifest(_require(os.path.join(cfg["paths.data_dir"], "manifest.jsonl")))
    model = _build_model(cfg, "aux")
    mel_cache = MelCache(cfg["paths.data_dir"], cfg.mel_config())
    summary = train(
        model,
        records_by_task(records, "train"),
        records_by_task(records, "val"),
        cfg.train_config("aux"),
        cfg.mix(),
        phase="aux",
        run_dir=os.path.join(run_dir, "aux"),
        mel_cache=mel_cache,
    )
    print(f"aux training done: final loss {summary['final_loss']:.4f} in {summary['wall_seconds']}s")
    return 0


def cmd_pseudo_label(args) -> int:
    cfg = _load_config(args)
    data_dir = cfg["paths.data_dir"]
    records = load_manifest(_require(os.path.join(data_dir, "manifest.jsonl")))
    model = _build_model(cfg, "aux")
    model.load_weights(_require(os.path.join(cfg["paths.run_dir"], "aux", "model.bin")))
    mel_cache = MelCache(data_dir, cfg.mel_config())
    transcribe = _make_transcriber(model, mel_cache, cfg.generation_config())

    to_label = [r for r in records if r.corpus in PSEUDO_CORPORA and r.split in ("train", "val")]
    keep = [r for r in records if not (r.corpus in PSEUDO_CORPORA and r.split in ("train", "val"))]
    relabeled, flagged = pseudo_label(transcribe, to_label)
    truth = {r.id: r.transcript for r in to_label}
    agree = sum(1 for r in relabeled if truth[r.id] == r.transcript)
    val = [r for r in relabeled if r.split == "val"]
    val_agree = sum(1 for r in val if truth[r.id] == r.transcript)
    save_manifest(_sorted(keep + relabeled), os.path.join(data_dir, "pseudo_manifest.jsonl"))
    stats = {
        "relabeled": len(relabeled),
        "flagged": len(flagged),
        "flagged_ids": flagged[:20],
        "exact_match": agree / max(len(relabeled), 1),
        "exact_match_heldout": val_agree / max(len(val), 1),
    }
    with open(os.path.join(data_dir, "pseudo_stats.json"), "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
    print(f"pseudo-labeled {stats['relabeled']} records, {stats['flagged']} flagged, exact match {stats['exact_match']:.3f}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    run_dir = cfg["paths.run_dir"]
    os.makedirs(run_dir, exist_ok=True)
    cfg.echo(os.path.join(run_dir, "config.resolved.cfg"))
    records = load_manifest(_require(os.path.join(cfg["paths.data_dir"], "pseudo_manifest.jsonl")))
    model = _build_model(cfg, "main")
    mel_cache = MelCache(cfg["paths.data_dir"], cfg.mel_config())
    summary = train(
        model,
        records_by_task(records, "train"),
        records_by_task(records, "val"),
        cfg.train_config("main"),
        cfg.mix(),
        phase="main",
        run_dir=os.path.join(run_dir, "main"),
        mel_cache=mel_cache,
        transcripts_pseudo=True,
    )
    print(f"main training done: final loss {summary['final_loss']:.4f} in {summary['wall_seconds']}s")
    return 0


def cmd_decode(args) -> int:
    cfg = _load_config(args)
    run_dir = cfg["paths.run_dir"]
    records = load_manifest(_require(os.path.join(cfg["paths.data_dir"], "manifest.jsonl")))
    model = _build_model(cfg, "main")
    model.load_weights(_require(os.path.join(run_dir, "main", "model.bin")))
    mel_cache = MelCache(cfg["paths.data_dir"], cfg.mel_config())
    gen_cfg = cfg.generation_config()
    test = [r for r in records if r.split == "test"]

    def decode_one(rec):
        template = TEMPLATES[DECODE_TEMPLATE[rec.corpus]]
        frames = None
        audio_len = None
        if template.audio:
            frames = mel_cache.frames(rec)
            audio_len = model.bridged_len_for_frames(frames.shape[0])
        prompt = build_prompt(rec, template, model.vocab, audio_len)
        result = greedy_decode(model, prompt, frames, gen_cfg)
        decision = extract_score(result, rec.corpus, model.vocab)
        row = {"id": rec.id, "task": rec.corpus, "text": decision.text, "flags": decision.flags}
        if decision.score is not None:
            row["score"] = decision.score
            row["diag_mass"] = decision.diag_mass
            row["renorm_score"] = decision.renorm_score
        if decision.da_class is not None:
            row["da_class"] = decision.da_class
        return row

    workers = max(1, int(getattr(args, "workers", None) or cfg["decode.workers"]))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(decode_one, test))
    else:
        rows = [decode_one(rec) for rec in test]
    rows.sort(key=lambda r: r["id"])
    out_path = os.path.join(run_dir, "decode.jsonl")
    tmp = out_path + ".tmp"
    with open(tmp, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, out_path)
    print(f"decoded {len(rows)} test records -> {out_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    run_dir = cfg["paths.run_dir"]
    decode_path = os.path.join(run_dir, "decode.jsonl")
    if not os.path.exists(decode_path):
        raise ConfigError(f"missing decode output: {decode_path} (run `valet decode` first)")
    manifest = _require(os.path.join(cfg["paths.data_dir"], "manifest.jsonl"))
    summary = evalkit.report(os.path.join(run_dir, "eval"), decode_path, manifest)
    print(evalkit.format_summary(summary), end="")
    return 0


ABLATION_MODES = [
    ("pooled_plus_sequence", False),
    ("pooled_only", False),
    ("sequence_only", False),
    ("pooled_plus_sequence", True),
]


def cmd_ablate(args) -> int:
    base = _load_config(args)
    root = base["paths.run_dir"]
    os.makedirs(root, exist_ok=True)
    data_dir = base["paths.data_dir"]
    if not os.path.exists(os.path.join(data_dir, "manifest.jsonl")):
        cmd_gen_data(args)
    table = {}
    for mode, gating in ABLATION_MODES:
        label = mode + ("_gated" if gating else "")
        sub = argparse.Namespace(
            config=args.config,
            run_dir=os.path.join(root, label),
            data_dir=data_dir,
            workers=getattr(args, "workers", None),
        )
        os.environ["VALET_BRIDGE__MODE"] = mode
        os.environ["VALET_BRIDGE__GATING"] = "true" if gating else "false"
        try:
            for step in (cmd_train_aux, cmd_pseudo_label, cmd_train, cmd_decode, cmd_eval):
                rc = step(sub)
                if rc != 0:
                    return rc
        finally:
            os.environ.pop("VALET_BRIDGE__MODE", None)
            os.environ.pop("VALET_BRIDGE__GATING", None)
        with open(os.path.join(root, label, "eval", "summary.json")) as f:
            table[label] = json.load(f)["tasks"]
    with open(os.path.join(root, "ablate_summary.json"), "w") as f:
        json.dump(table, f, indent=2, sort_keys=True)
    lines = [f"{'bridge mode':<32}{'VT EER':>10}{'DDSD EER':>10}{'WER':>8}"]
    for label, tasks in table.items():
        lines.append(
            f"{label:<32}"
            f"{tasks.get('vt', {}).get('eer', float('nan')):>10.4f}"
            f"{tasks.get('ddsd', {}).get('eer', float('nan')):>10.4f}"
            f"{tasks.get('asr', {}).get('wer', float('nan')):>8.4f}"
        )
    text = "\n".join(lines) + "\n"
    with open(os.path.join(root, "ablate_summary.txt"), "w") as f:
        f.write(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"missing required file: {path}")
    return path


def _sorted(records):
    return sorted(records, key=lambda r: r.id)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("gen-data", cmd_gen_data, "generate the synthetic corpus"),
        ("train-aux", cmd_train_aux, "train the auxiliary (no-ASR-prefix) model"),
        ("pseudo-label", cmd_pseudo_label, "transcribe VT/DDSD/DA data with the aux model"),
        ("train", cmd_train, "train the main model on pseudo-labeled data"),
        ("decode", cmd_decode, "greedy-decode the test split"),
        ("eval", cmd_eval, "score decode output (EER / WER / DET CSVs)"),
        ("ablate", cmd_ablate, "run all bridge modes and tabulate"),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--run-dir", help="override paths.run_dir")
        p.add_argument("--data-dir", help="override paths.data_dir")
        if name in ("decode", "ablate"):
            p.add_argument("--workers", type=int, help="decode worker threads")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure with context
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
