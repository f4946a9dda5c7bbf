"""Waveform ingestion and log-Mel feature extraction.

The frontend is fixed to the common 16 kHz convention: 400-sample Hann
window, 160-sample hop, HTK-mel triangular filterbank, power spectrum,
log10 with a 1e-10 floor, clamp at (max - 8) and rescale (v + 4) / 4.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError

SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray  # float, in [-1, 1]
    sample_rate: int = SAMPLE_RATE


@dataclass
class MelConfig:
    sample_rate: int = SAMPLE_RATE
    window: int = 400
    hop: int = 160
    n_mels: int = 80
    log_floor: float = 1e-10
    dynamic_range: float = 8.0


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) normalized log energies
    frame_hop: int
    n_mels: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def load_audio(path: str) -> Waveform:
    """Read 16 kHz mono PCM16 WAV, or raw little-endian float32 otherwise."""
    if str(path).lower().endswith(".wav"):
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono audio, found {w.getnchannels()} channels")
            if w.getframerate() != SAMPLE_RATE:
                raise FormatError(f"{path}: expected {SAMPLE_RATE} Hz, found {w.getframerate()} Hz")
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, found {8 * w.getsampwidth()}-bit")
            raw = w.readframes(w.getnframes())
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    else:
        samples = np.fromfile(path, dtype="<f4")
    return Waveform(samples=samples, sample_rate=SAMPLE_RATE)


def save_wav(path: str, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float samples in [-1, 1] as mono PCM16."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters, area-normalized. Returns (n_mels, n_fft_bins)."""
    nyquist = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.linspace(0.0, nyquist, n_fft_bins)
    fb = np.zeros((n_mels, n_fft_bins))
    for i in range(n_mels):
        lo, mid, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (bin_freqs - lo) / (mid - lo)
        down = (hi - bin_freqs) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
        fb[i] *= 2.0 / (hi - lo)
    return fb


def filterbank_center_freqs(n_mels: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Center frequency (Hz) of each mel filter."""
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def log_mel(w: Waveform, cfg: MelConfig | None = None) -> MelSpectrogram:
    """Log-Mel features with centered frames (reflective padding).

    T = 1 + floor(len(samples) / hop); every frame is a Hann-windowed power
    spectrum folded through the mel filterbank.
    """
    cfg = cfg or MelConfig()
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size == 0:
        raise ContractError("empty waveform")
    if x.size < cfg.window:
        raise ContractError(f"waveform shorter than one window ({x.size} < {cfg.window})")
    if w.sample_rate != cfg.sample_rate:
        raise FormatError(f"expected {cfg.sample_rate} Hz, found {w.sample_rate} Hz")

    pad = cfg.window // 2
    x = np.pad(x, pad, mode="reflect")
    n_frames = 1 + (x.size - cfg.window) // cfg.hop
    idx = np.arange(cfg.window)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(cfg.window)[None, :]
    power = np.abs(np.fft.rfft(frames, n=cfg.window, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.window // 2 + 1, cfg.sample_rate)
    mel = power @ fb.T
    logmel = np.log10(np.maximum(mel, cfg.log_floor))
    logmel = np.maximum(logmel, logmel.max() - cfg.dynamic_range)
    logmel = (logmel + 4.0) / 4.0
    return MelSpectrogram(frames=logmel.astype(np.float32), frame_hop=cfg.hop, n_mels=cfg.n_mels)


def write_mel_csv(mel: MelSpectrogram, path: str) -> None:
    """Debug dump: one CSV row per frame."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in mel.frames:
            writer.writerow([f"{v:.6f}" for v in row])
