"""Task data: prompt goldens, corpus construction rules, masks, mixing."""

import json
import os

import numpy as np
import pytest

from valet.errors import ConfigError, DataError
from valet.taskdata import (
    DEFAULT_WORDS,
    TEMPLATES,
    MixWeights,
    QueryRecord,
    SyntheticSpec,
    build_example,
    build_prompt,
    generate_corpus,
    load_manifest,
    pseudo_label,
    records_by_task,
    sample_batch,
    template_for,
    word_frequencies,
)
from valet.vocab import Vocabulary

VOCAB = Vocabulary()


class TestPromptGoldens:
    """The six primary prompt strings, frozen byte-for-byte."""

    def test_prompts_are_byte_exact(self):
        golden = {
            1: "What does the person say?",
            2: "What does the person say and what type of dialog act is this?",
            3: "What does the person say and does this query contain the trigger phrase?",
            4: "What does the person say and is this query directed towards a virtual assistant?",
            6: "Does this query contain the trigger phrase and what type of dialog act is this?",
        }
        by_id = {t.task_id: t.prompt for t in TEMPLATES.values() if t.task_id}
        assert by_id == golden

    def test_aux_variants_strip_the_asr_part(self):
        assert TEMPLATES["vt"].prompt == "Does this query contain the trigger phrase?"
        assert TEMPLATES["dd"].prompt == "Is this query directed towards a virtual assistant?"
        assert TEMPLATES["da"].prompt == "What type of dialog act is this?"


def small_spec(**kw):
    base = dict(
        seed=3,
        counts={
            "vt": (30, 5, 5),
            "ddsd": (30, 5, 5),
            "asr": (20, 5, 5),
            "text_ddsd": (10, 2, 2),
            "da": (10, 2, 2),
        },
    )
    base.update(kw)
    return SyntheticSpec(**base)


class TestCorpus:
    def test_same_seed_is_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        generate_corpus(small_spec(), a)
        generate_corpus(small_spec(), b)
        assert open(os.path.join(a, "manifest.jsonl"), "rb").read() == open(os.path.join(b, "manifest.jsonl"), "rb").read()
        wav = sorted(os.listdir(os.path.join(a, "wavs")))[0]
        assert (
            open(os.path.join(a, "wavs", wav), "rb").read()
            == open(os.path.join(b, "wavs", wav), "rb").read()
        )

    def test_different_seed_differs(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        generate_corpus(small_spec(), a)
        generate_corpus(small_spec(seed=4), b)
        assert open(os.path.join(a, "manifest.jsonl")).read() != open(os.path.join(b, "manifest.jsonl")).read()

    def test_vt_label_iff_trigger_prefix(self, tmp_path):
        records = generate_corpus(small_spec(), str(tmp_path / "c"), write_audio=False)
        for rec in records:
            starts = rec.transcript.startswith("hey device")
            assert (rec.vt_label == "yes") == starts

    def test_text_only_records_have_no_audio(self, tmp_path):
        records = generate_corpus(small_spec(), str(tmp_path / "c"), write_audio=False)
        for rec in records:
            if rec.corpus == "text_ddsd":
                assert rec.audio_path is None
                assert rec.dd_label in ("yes", "no")
            else:
                assert rec.audio_path is not None

    def test_audio_files_exist_and_load(self, tmp_path):
        out = str(tmp_path / "c")
        records = generate_corpus(small_spec(), out)
        from valet.audio import load_audio

        with_audio = [r for r in records if r.audio_path][:5]
        for rec in with_audio:
            w = load_audio(os.path.join(out, rec.audio_path))
            assert w.samples.size > 0
            assert np.abs(w.samples).max() <= 1.0

    def test_class_priors_within_two_percent_on_10k(self, tmp_path):
        spec = small_spec(
            counts={"vt": (4000, 0, 0), "ddsd": (4000, 0, 0), "asr": (0, 0, 0), "text_ddsd": (0, 0, 0), "da": (2000, 0, 0)}
        )
        records = generate_corpus(spec, str(tmp_path / "big"), write_audio=False)
        assert len(records) == 10000
        vt = [r for r in records if r.corpus == "vt"]
        frac_vt = sum(r.vt_label == "yes" for r in vt) / len(vt)
        assert abs(frac_vt - spec.vt_positive_prior) < 0.02
        dd = [r for r in records if r.corpus == "ddsd"]
        frac_dd = sum(r.dd_label == "yes" for r in dd) / len(dd)
        assert abs(frac_dd - spec.dd_positive_prior) < 0.02
        da = [r for r in records if r.corpus == "da"]
        for cls in ("question", "command", "statement"):
            frac = sum(r.da_label == cls for r in da) / len(da)
            assert abs(frac - 1 / 3) < 0.02

    def test_word_frequency_map_is_injective(self):
        freqs = word_frequencies(small_spec())
        assert len(set(freqs.values())) == len(DEFAULT_WORDS)

    def test_manifest_roundtrip(self, tmp_path):
        out = str(tmp_path / "c")
        records = generate_corpus(small_spec(), out, write_audio=False)
        loaded = load_manifest(os.path.join(out, "manifest.jsonl"))
        assert loaded == records

    def test_trigger_words_must_be_in_vocab(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(trigger_phrase="ahoy computer")


def _rec(**kw):
    base = dict(
        id="vt-train-00000",
        audio_path="wavs/vt-train-00000.wav",
        transcript="set a timer",
        vt_label="no",
        dd_label="yes",
        da_label="command",
        split="train",
        corpus="vt",
    )
    base.update(kw)
    return QueryRecord(**base)


class TestBuildExample:
    def test_asr_target_and_mask(self):
        ex = build_example(_rec(), TEMPLATES["asr"], VOCAB, audio_len=6)
        tail = VOCAB.tokenize("set a timer").ids + [VOCAB.endoftext]
        assert ex.target_ids == tail
        assert ex.tokens.ids[-len(tail) :] == tail
        # the mask covers exactly the target tokens
        n_prompt = len(ex.tokens.ids) - len(tail)
        assert ex.loss_mask[:n_prompt].sum() == 0
        assert ex.loss_mask[n_prompt:].sum() == len(tail)

    def test_combined_vt_target(self):
        ex = build_example(_rec(vt_label="yes"), TEMPLATES["asr_vt"], VOCAB, audio_len=4)
        assert ex.target_ids[-3:] == [VOCAB.vt, VOCAB.yes, VOCAB.endoftext]
        assert ex.target_ids[: len("set a timer")] == VOCAB.tokenize("set a timer").ids

    def test_text_only_ddsd_example(self):
        rec = _rec(corpus="text_ddsd", audio_path=None, dd_label="no", transcript="he was nice today")
        ex = build_example(rec, TEMPLATES["text_dd"], VOCAB)
        assert ex.tokens.audio_span is None
        assert ex.target_ids == [VOCAB.dd, VOCAB.no, VOCAB.endoftext]
        text = VOCAB.detokenize(ex.tokens.ids)
        assert text.startswith("he was nice today\n")
        assert TEMPLATES["text_dd"].prompt in text

    def test_audio_span_structure(self):
        ex = build_example(_rec(), TEMPLATES["asr"], VOCAB, audio_len=5)
        start, length = ex.tokens.audio_span
        assert length == 5
        assert ex.tokens.ids[0] == VOCAB.audio_start
        assert all(t == VOCAB.audio_pad for t in ex.tokens.ids[start : start + length])
        assert ex.tokens.ids[start + length] == VOCAB.audio_end

    def test_mask_reconstructs_target_text(self):
        # shifting by one must line labels up with mask: rebuilding the
        # masked positions yields the serialized target exactly
        for name in ("asr", "asr_vt", "asr_dd", "asr_da", "vt_da"):
            ex = build_example(_rec(da_label="question"), TEMPLATES[name], VOCAB, audio_len=3)
            ids = np.asarray(ex.tokens.ids)
            labels, mask = ids[1:], ex.loss_mask[1:]
            picked = labels[mask == 1].tolist()
            assert picked == ex.target_ids

    def test_missing_audio_rejected(self):
        with pytest.raises(DataError):
            build_example(_rec(audio_path=None), TEMPLATES["asr"], VOCAB, audio_len=3)

    def test_missing_transcript_for_asr_rejected(self):
        with pytest.raises(DataError):
            build_example(_rec(transcript=""), TEMPLATES["asr"], VOCAB, audio_len=3)

    def test_prompt_matches_example_prefix(self):
        rec = _rec()
        prompt = build_prompt(rec, TEMPLATES["asr_vt"], VOCAB, audio_len=4)
        ex = build_example(rec, TEMPLATES["asr_vt"], VOCAB, audio_len=4)
        assert ex.tokens.ids[: len(prompt.ids)] == prompt.ids


class TestMixing:
    def make_sets(self):
        return {
            "vt": [_rec(id=f"vt-{i}") for i in range(5)],
            "ddsd": [_rec(id=f"dd-{i}", corpus="ddsd") for i in range(5)],
            "asr": [_rec(id=f"asr-{i}", corpus="asr") for i in range(5)],
            "text_ddsd": [_rec(id=f"t-{i}", corpus="text_ddsd", audio_path=None) for i in range(5)],
            "da": [_rec(id=f"da-{i}", corpus="da") for i in range(5)],
        }

    def test_degenerate_weights_yield_one_task(self):
        rng = np.random.default_rng(0)
        w = MixWeights(vt=1.0, ddsd=0.0, asr=0.0, text_ddsd=0.0, da=0.0)
        batch = sample_batch(self.make_sets(), w, rng, 64)
        assert all(task == "vt" for task, _ in batch)

    def test_empirical_mix_tracks_weights(self):
        rng = np.random.default_rng(1)
        w = MixWeights()
        counts = {t: 0 for t in w.as_dict()}
        n = 100_000
        for task, _ in sample_batch(self.make_sets(), w, rng, n):
            counts[task] += 1
        for task, weight in w.as_dict().items():
            assert abs(counts[task] / n - weight) < 0.01

    def test_zero_weight_never_sampled(self):
        rng = np.random.default_rng(2)
        w = MixWeights(vt=0.5, ddsd=0.5, asr=0.0, text_ddsd=0.0, da=0.0)
        batch = sample_batch(self.make_sets(), w, rng, 500)
        assert all(task in ("vt", "ddsd") for task, _ in batch)

    def test_empty_dataset_with_weight_is_error(self):
        sets = self.make_sets()
        sets["asr"] = []
        with pytest.raises(ConfigError):
            sample_batch(sets, MixWeights(), np.random.default_rng(3), 8)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            MixWeights(vt=0.5, ddsd=0.5, asr=0.5, text_ddsd=0.0, da=0.0)

    def test_records_by_task_buckets_by_corpus_and_split(self, tmp_path):
        records = generate_corpus(small_spec(), str(tmp_path / "c"), write_audio=False)
        train = records_by_task(records, "train")
        assert len(train["vt"]) == 30
        assert len(train["asr"]) == 20
        test = records_by_task(records, "test")
        assert len(test["text_ddsd"]) == 2


class TestPseudoLabel:
    def test_transcripts_replaced_deterministically(self):
        records = [_rec(id=f"r{i}", transcript=f"truth {i}") for i in range(4)]

        def transcribe(rec):
            return f"hyp for {rec.id}"

        out1, flagged1 = pseudo_label(transcribe, records)
        out2, flagged2 = pseudo_label(transcribe, records)
        assert [r.transcript for r in out1] == [f"hyp for r{i}" for i in range(4)]
        assert out1 == out2 and flagged1 == flagged2 == []
        # originals untouched
        assert records[0].transcript == "truth 0"

    def test_failures_flagged_and_excluded(self):
        records = [_rec(id="ok"), _rec(id="empty"), _rec(id="boom")]

        def transcribe(rec):
            if rec.id == "empty":
                return "   "
            if rec.id == "boom":
                raise RuntimeError("decode failure")
            return "fine"

        out, flagged = pseudo_label(transcribe, records)
        assert [r.id for r in out] == ["ok"]
        assert sorted(flagged) == ["boom", "empty"]


class TestTemplateRouting:
    def test_main_phase_uses_combined_prompts(self):
        rng = np.random.default_rng(0)
        assert template_for("vt", "main", rng).name == "asr_vt"
        assert template_for("ddsd", "main", rng).name == "asr_dd"
        assert template_for("asr", "main", rng).name == "asr"
        assert template_for("text_ddsd", "main", rng).name == "text_dd"
        assert template_for("da", "main", rng).name in ("asr_da", "vt_da")

    def test_aux_phase_avoids_asr_prefixes_for_vt_ddsd(self):
        rng = np.random.default_rng(0)
        assert template_for("vt", "aux", rng).name == "vt"
        assert template_for("ddsd", "aux", rng).name == "dd"
        for _ in range(10):
            assert "asr" not in template_for("da", "aux", rng).parts
