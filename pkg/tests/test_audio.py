"""Audio frontend: WAV ingestion, framing arithmetic, filterbank behavior."""

import os

import numpy as np
import pytest

from valet.audio import (
    MelConfig,
    Waveform,
    filterbank_center_freqs,
    load_audio,
    log_mel,
    mel_filterbank,
    save_wav,
    write_mel_csv,
)
from valet.errors import ContractError, FormatError

CFG = MelConfig(n_mels=80)


def test_silence_is_a_constant_matrix():
    mel = log_mel(Waveform(np.zeros(16000, dtype=np.float32)), CFG)
    # every bin clamps to the floor, so normalization yields one value
    assert np.allclose(mel.frames, mel.frames[0, 0])
    np.testing.assert_allclose(mel.frames[0, 0], (-10.0 + 4.0) / 4.0, atol=1e-6)


def test_pure_tone_dominates_one_bin_in_every_frame():
    t = np.arange(16000) / 16000.0
    tone = 0.5 * np.sin(2 * np.pi * 1000.0 * t)
    mel = log_mel(Waveform(tone.astype(np.float32)), CFG)
    argmax = mel.frames.argmax(axis=1)
    # interior frames (no reflect-padding leakage) agree exactly
    interior = argmax[1:-1]
    assert np.all(interior == interior[0])
    # oracle: the winning filter's triangular support must contain 1 kHz
    centers = filterbank_center_freqs(CFG.n_mels)
    edges = np.concatenate([[0.0], centers, [8000.0]])
    b = int(interior[0])
    assert edges[b] < 1000.0 < edges[b + 2]
    # boundary frames may tip into the adjacent overlapping filter at most
    assert abs(int(argmax[0]) - b) <= 1 and abs(int(argmax[-1]) - b) <= 1


def test_frame_count_formula():
    mel = log_mel(Waveform(np.random.default_rng(0).uniform(-0.1, 0.1, 16000).astype(np.float32)), CFG)
    assert mel.n_frames == 101  # centered: 1 + floor(16000 / 160)


def test_shift_by_one_hop_shifts_frames_by_one():
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, 8000).astype(np.float32)
    delayed = np.concatenate([np.zeros(CFG.hop, dtype=np.float32), x])
    a = log_mel(Waveform(x), CFG).frames
    b = log_mel(Waveform(delayed), CFG).frames
    # compare interior frames away from the reflect-padded boundaries
    inner = slice(3, a.shape[0] - 3)
    np.testing.assert_allclose(a[inner], b[1:][inner], atol=1e-5)


def test_polarity_invariance():
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.5, 0.5, 6400).astype(np.float32)
    a = log_mel(Waveform(x), CFG).frames
    b = log_mel(Waveform(-x), CFG).frames
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_determinism():
    x = np.random.default_rng(3).uniform(-0.5, 0.5, 6400).astype(np.float32)
    a = log_mel(Waveform(x.copy()), CFG).frames
    b = log_mel(Waveform(x.copy()), CFG).frames
    assert np.array_equal(a, b)


def test_empty_and_short_waveforms_rejected():
    with pytest.raises(ContractError):
        log_mel(Waveform(np.zeros(0, dtype=np.float32)), CFG)
    with pytest.raises(ContractError):
        log_mel(Waveform(np.zeros(100, dtype=np.float32)), CFG)


def test_filterbank_rows_cover_the_band():
    fb = mel_filterbank(40, 201, 16000)
    assert fb.shape == (40, 201)
    assert np.all(fb >= 0.0)
    assert np.all(fb.sum(axis=1) > 0.0)


class TestWavIO:
    def test_pcm16_roundtrip_scale(self, tmp_path):
        path = str(tmp_path / "a.wav")
        x = np.linspace(-0.9, 0.9, 1600).astype(np.float32)
        save_wav(path, x)
        w = load_audio(path)
        assert w.sample_rate == 16000
        assert np.abs(w.samples).max() <= 1.0
        np.testing.assert_allclose(w.samples, x, atol=2.0 / 32768)

    def test_wrong_rate_reports_expected_vs_found(self, tmp_path):
        import wave

        path = str(tmp_path / "bad.wav")
        with wave.open(path, "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(44100)
            f.writeframes(b"\x00\x00" * 100)
        with pytest.raises(FormatError, match="expected 16000 Hz, found 44100 Hz"):
            load_audio(path)

    def test_wrong_channels_rejected(self, tmp_path):
        import wave

        path = str(tmp_path / "stereo.wav")
        with wave.open(path, "wb") as f:
            f.setnchannels(2)
            f.setsampwidth(2)
            f.setframerate(16000)
            f.writeframes(b"\x00\x00\x00\x00" * 100)
        with pytest.raises(FormatError, match="mono"):
            load_audio(path)

    def test_raw_f32_input(self, tmp_path):
        path = str(tmp_path / "x.f32")
        x = np.linspace(-0.5, 0.5, 800).astype("<f4")
        x.tofile(path)
        w = load_audio(path)
        np.testing.assert_array_equal(w.samples, x)

    def test_mel_csv_dump(self, tmp_path):
        x = np.random.default_rng(4).uniform(-0.3, 0.3, 3200).astype(np.float32)
        mel = log_mel(Waveform(x), CFG)
        path = str(tmp_path / "mel.csv")
        write_mel_csv(mel, path)
        rows = open(path).read().strip().split("\n")
        assert len(rows) == mel.n_frames
        assert len(rows[0].split(",")) == CFG.n_mels
