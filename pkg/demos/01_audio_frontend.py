"""Waveforms to log-Mel features.

Synthesizes a short two-tone utterance, runs the frontend, and shows the
frame arithmetic plus which mel filters light up.
"""

import numpy as np

from valet.audio import MelConfig, Waveform, filterbank_center_freqs, log_mel

SR = 16000

# one second: 400 Hz + 5 kHz tone pair, like one synthetic "word"
t = np.arange(SR) / SR
wave = 0.45 * np.sin(2 * np.pi * 400 * t) + 0.45 * np.sin(2 * np.pi * 5000 * t)

cfg = MelConfig(n_mels=40)
mel = log_mel(Waveform(wave.astype(np.float32)), cfg)

print(f"samples: {wave.size}, window {cfg.window}, hop {cfg.hop}")
print(f"frames:  {mel.n_frames} x {mel.n_mels}   (T = 1 + floor(N / hop))")

centers = filterbank_center_freqs(cfg.n_mels)
mean_energy = mel.frames.mean(axis=0)
top = np.argsort(mean_energy)[-4:][::-1]
print("\nhottest mel bins (bin, center Hz, mean normalized energy):")
for b in top:
    print(f"  {b:3d}  {centers[b]:7.1f}  {mean_energy[b]:+.3f}")

silence = log_mel(Waveform(np.zeros(SR, dtype=np.float32)), cfg)
print(f"\nsilence maps to a constant matrix: value {silence.frames[0, 0]:+.3f}")
