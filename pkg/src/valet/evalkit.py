"""WER, FAR/FRR threshold sweeps, EER, and run-level reporting.

Detection metrics follow the accept-iff-score>=threshold convention:
FAR is the fraction of negatives accepted, FRR the fraction of positives
rejected; EER is where the two curves cross, linearly interpolated between
adjacent sweep points.
"""

from __future__ import annotations

import csv
import json
import os
import re
import string
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .taskdata import load_manifest

_PUNCT = re.compile("[" + re.escape(string.punctuation) + "]")


@dataclass
class ScoredTrial:
    score: float
    label: bool  # True = positive (intended / contains trigger)


@dataclass
class DETPoint:
    threshold: float
    far: float
    frr: float


def normalize_text(s: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(_PUNCT.sub(" ", s.lower()).split())


def wer(ref: str, hyp: str) -> tuple[float, int, int, int]:
    """Word error rate via minimum edit distance.

    Returns (rate, substitutions, insertions, deletions). Empty reference
    against a nonempty hypothesis counts every hypothesis word as an
    insertion with rate len(hyp); empty/empty is 0.
    """
    r = normalize_text(ref).split()
    h = normalize_text(hyp).split()
    if not r:
        return (float(len(h)), 0, len(h), 0) if h else (0.0, 0, 0, 0)
    # DP over (cost, subs, ins, dels)
    prev = [(j, 0, j, 0) for j in range(len(h) + 1)]
    for i in range(1, len(r) + 1):
        cur = [(i, 0, 0, i)]
        for j in range(1, len(h) + 1):
            if r[i - 1] == h[j - 1]:
                best = prev[j - 1]
            else:
                sub = (prev[j - 1][0] + 1, prev[j - 1][1] + 1, prev[j - 1][2], prev[j - 1][3])
                ins = (cur[j - 1][0] + 1, cur[j - 1][1], cur[j - 1][2] + 1, cur[j - 1][3])
                dele = (prev[j][0] + 1, prev[j][1], prev[j][2], prev[j][3] + 1)
                best = min(sub, ins, dele)
            cur.append(best)
        prev = cur
    cost, s, ins, d = prev[-1]
    return cost / len(r), s, ins, d


def det_sweep(trials) -> list[DETPoint]:
    """FAR/FRR at every distinct score plus -inf/+inf sentinels.

    Points come back ordered by ascending threshold; FAR is non-increasing
    and FRR non-decreasing along that order (asserted).
    """
    pos = np.array([t.score for t in trials if t.label], dtype=np.float64)
    neg = np.array([t.score for t in trials if not t.label], dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise MetricError("det_sweep needs at least one positive and one negative trial")
    thresholds = [-np.inf] + sorted(set(np.concatenate([pos, neg]).tolist())) + [np.inf]
    points = []
    for th in thresholds:
        far = float(np.mean(neg >= th))
        frr = float(np.mean(pos < th))
        points.append(DETPoint(threshold=th, far=far, frr=frr))
    for a, b in zip(points, points[1:]):
        assert a.far >= b.far - 1e-12 and a.frr <= b.frr + 1e-12, "DET monotonicity violated"
    return points


def eer(trials) -> float:
    """Rate where FAR == FRR, interpolated between bracketing sweep points."""
    points = det_sweep(trials)
    diffs = [p.far - p.frr for p in points]
    for i, (p, d) in enumerate(zip(points, diffs)):
        if d == 0.0:
            return p.far
        if i + 1 < len(points) and diffs[i] > 0.0 > diffs[i + 1]:
            p2 = points[i + 1]
            denom = (p2.far - p.far) - (p2.frr - p.frr)
            t = (p.frr - p.far) / denom if denom != 0.0 else 0.5
            return p.far + t * (p2.far - p.far)
    # diffs start at +1 (accept all) and end at -1 (reject all), so a
    # bracketing pair always exists; this is unreachable on valid input
    raise MetricError("no FAR/FRR crossing found")


def write_det_csv(points, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "far", "frr"])
        for p in points:
            w.writerow([p.threshold, f"{p.far:.6f}", f"{p.frr:.6f}"])


# ---------------------------------------------------------------------------
# run-level report
# ---------------------------------------------------------------------------

_BINARY_TASKS = {"vt": "vt_label", "ddsd": "dd_label", "text_ddsd": "dd_label"}


def report(run_dir: str, decode_path: str, manifest_path: str) -> dict:
    """Aggregate decode output against manifest labels.

    Writes summary.json / summary.txt plus one DET CSV per binary task into
    ``run_dir`` and returns the summary dict. No-decision trials score 0.0
    (always rejected) and are counted.
    """
    labels = {rec.id: rec for rec in load_manifest(manifest_path)}
    rows = []
    with open(decode_path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))

    summary: dict = {"tasks": {}}
    os.makedirs(run_dir, exist_ok=True)
    for task, label_field in _BINARY_TASKS.items():
        task_rows = [r for r in rows if r["task"] == task]
        if not task_rows:
            continue
        trials = []
        diag = []
        no_decision = 0
        confusion = 0
        for r in task_rows:
            rec = labels[r["id"]]
            positive = getattr(rec, label_field) == "yes"
            score = r.get("score")
            if score is None:
                no_decision += 1
                score = 0.0
            else:
                diag.append(r.get("diag_mass", 0.0))
            if "task-confusion" in r.get("flags", []):
                confusion += 1
            trials.append(ScoredTrial(score=float(score), label=positive))
        points = det_sweep(trials)
        write_det_csv(points, os.path.join(run_dir, f"det_{task}.csv"))
        summary["tasks"][task] = {
            "trials": len(trials),
            "eer": eer(trials),
            "no_decision": no_decision,
            "task_confusion": confusion,
            "mean_diag_mass": float(np.mean(diag)) if diag else None,
        }

    asr_rows = [r for r in rows if r["task"] == "asr"]
    if asr_rows:
        errs = words = 0
        for r in asr_rows:
            rec = labels[r["id"]]
            _, s, i, d = wer(rec.transcript, r.get("text", ""))
            errs += s + i + d
            words += len(normalize_text(rec.transcript).split())
        summary["tasks"]["asr"] = {
            "trials": len(asr_rows),
            "wer": errs / max(words, 1),
            "ref_words": words,
        }

    da_rows = [r for r in rows if r["task"] == "da"]
    if da_rows:
        correct = sum(1 for r in da_rows if r.get("da_class") == labels[r["id"]].da_label)
        summary["tasks"]["da"] = {"trials": len(da_rows), "accuracy": correct / len(da_rows)}

    with open(os.path.join(run_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    with open(os.path.join(run_dir, "summary.txt"), "w") as f:
        f.write(format_summary(summary))
    return summary


def format_summary(summary: dict) -> str:
    lines = [f"{'task':<12}{'trials':>8}{'metric':>16}{'value':>10}   extras"]
    for task, m in sorted(summary["tasks"].items()):
        if "eer" in m:
            extras = f"no-decision={m['no_decision']} confusion={m['task_confusion']}"
            if m.get("mean_diag_mass") is not None:
                extras += f" diag_mass={m['mean_diag_mass']:.3f}"
            lines.append(f"{task:<12}{m['trials']:>8}{'EER':>16}{m['eer']:>10.4f}   {extras}")
        elif "wer" in m:
            lines.append(f"{task:<12}{m['trials']:>8}{'WER':>16}{m['wer']:>10.4f}   ref_words={m['ref_words']}")
        else:
            lines.append(f"{task:<12}{m['trials']:>8}{'accuracy':>16}{m['accuracy']:>10.4f}")
    return "\n".join(lines) + "\n"
