"""Deterministic speech-like test signals.

Voiced harmonic source with a gliding pitch contour, shaped by a few formant
resonators and a syllable-rate amplitude envelope. Used for the toy training
runs and the CLI demo; no external corpus is needed.
"""
from __future__ import annotations

import numpy as np
from scipy import signal


def _resonator(x, freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return signal.lfilter([1.0 - r], a, x)


def speech_like(seconds: float, seed: int, sample_rate: int = 16000, peak: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    f0_start, f0_end = rng.uniform(90, 240, size=2)
    f0 = np.linspace(f0_start, f0_end, n) * (1 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    src = np.zeros(n)
    for h in range(1, 25):
        src += np.where(h * f0 < sample_rate / 2 - 500, np.cos(h * phase) / h, 0.0)
    out = np.zeros(n)
    formants = rng.uniform([300, 900, 2200], [800, 2000, 3200])
    for f, bw in zip(formants, (80, 120, 160)):
        out += _resonator(src, f, bw, sample_rate)
    syll = rng.uniform(2.5, 5.0)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * syll * t + rng.uniform(0, 2 * np.pi))
    env *= np.minimum(1.0, np.minimum(t, t[::-1]) / 0.02 + 1e-3)
    out = out * env + 0.003 * rng.standard_normal(n)
    return (peak * out / np.max(np.abs(out))).astype(np.float32)


def toy_corpus(num_clips: int = 8, seconds: float = 1.0, seed: int = 0, sample_rate: int = 16000):
    return [speech_like(seconds, seed * 1000 + i, sample_rate) for i in range(num_clips)]
