"""Objective speech metrics that need no pretrained models.

Front-end defaults: 16 kHz, 25 ms Hann window (400 samples), 10 ms hop,
80 HTK-scale triangular mel bands, no centering.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct
from scipy.ndimage import gaussian_filter

SAMPLE_RATE = 16000
WIN = 400
HOP = 160
N_MELS = 80
N_MCEP = 13
SNR_CAP = 100.0
_LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate=SAMPLE_RATE, n_fft=WIN, n_mels=N_MELS, fmin=0.0, fmax=None) -> np.ndarray:
    """(n_mels, n_fft // 2 + 1) triangular filters with unit peak."""
    fmax = fmax or sample_rate / 2
    fft_freqs = np.linspace(0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs - lower) / (center - lower)
    falling = (upper - fft_freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frames(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < win:
        x = np.pad(x, (0, win - len(x)))
    return sliding_window_view(x, win)[::hop]


def power_spectrogram(x, win=WIN, hop=HOP) -> np.ndarray:
    """(num_frames, win // 2 + 1) power spectrum with a periodic Hann window."""
    window = np.hanning(win + 1)[:-1]
    return np.abs(np.fft.rfft(frames(x, win, hop) * window, axis=-1)) ** 2


def log_mel(x, sample_rate=SAMPLE_RATE) -> np.ndarray:
    """Natural-log mel power spectrogram, shape (num_frames, n_mels)."""
    mel = power_spectrogram(x) @ mel_filterbank(sample_rate).T
    return np.log(np.maximum(mel, _LOG_FLOOR))


def mel_cepstrum(x, n_coef=N_MCEP) -> np.ndarray:
    """Coefficients 1..n_coef of the orthonormal DCT-II of the log-mel spectrum."""
    return dct(log_mel(x), type=2, norm="ortho", axis=-1)[:, 1 : n_coef + 1]


def _paired(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = min(len(x), len(y))
    return x[:n], y[:n]


def mcd(x, y) -> float:
    """Mel-cepstral distortion in dB, averaged over frames (energy term excluded)."""
    x, y = _paired(x, y)
    for name, s in (("reference", x), ("candidate", y)):
        if not np.any(np.abs(s) > 1e-6):
            raise ValueError(f"{name} signal is silent; MCD is undefined")
    diff = mel_cepstrum(x) - mel_cepstrum(y)
    per_frame = (10.0 / math.log(10.0)) * np.sqrt(2.0 * np.sum(diff**2, axis=-1))
    return float(per_frame.mean())


def ssim(a: np.ndarray, b: np.ndarray, data_range: float, sigma: float = 1.5) -> float:
    """Gaussian-window SSIM of two 2-D images, averaged away from the borders."""
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def blur(img):
        return gaussian_filter(img, sigma, truncate=3.5)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    pad = int(3.5 * sigma + 0.5)
    if min(s.shape) <= 2 * pad:
        raise ValueError(f"image {s.shape} too small for SSIM window")
    return float(s[pad:-pad, pad:-pad].mean())


def mel_ssim(x, y) -> float:
    x, y = _paired(x, y)
    a, b = log_mel(x), log_mel(y)
    data_range = float(a.max() - a.min()) or 1.0
    return ssim(a, b, data_range)


def snr(x, y, cap: float = SNR_CAP) -> float:
    """10 log10(sum x^2 / sum (x - y)^2), reported as ``cap`` when y == x."""
    x, y = _paired(x, y)
    signal = float(np.sum(x**2))
    noise = float(np.sum((x - y) ** 2))
    if signal == 0:
        raise ValueError("reference signal has zero energy")
    if noise == 0:
        return cap
    return min(cap, 10.0 * math.log10(signal / noise))


def stft_dist(x, y, windows=(512, 1024, 2048), eps=1e-5) -> float:
    """Multi-resolution spectral convergence + log-magnitude L1, averaged over windows."""
    x, y = _paired(x, y)
    total = 0.0
    for win in windows:
        window = np.hanning(win + 1)[:-1]
        mx = np.abs(np.fft.rfft(frames(x, win, win // 4) * window, axis=-1))
        my = np.abs(np.fft.rfft(frames(y, win, win // 4) * window, axis=-1))
        sc = np.linalg.norm(mx - my) / max(np.linalg.norm(mx), eps)
        total += sc + np.mean(np.abs(np.log(mx + eps) - np.log(my + eps)))
    return float(total / len(windows))


@dataclass
class MetricReport:
    mcd: float
    mel_ssim: float
    snr: float
    stft_dist: float
    bitrate_bps: float | None = None


def evaluate_pair(reference, candidate, bitrate_bps=None) -> MetricReport:
    return MetricReport(
        mcd=mcd(reference, candidate),
        mel_ssim=mel_ssim(reference, candidate),
        snr=snr(reference, candidate),
        stft_dist=stft_dist(reference, candidate),
        bitrate_bps=bitrate_bps,
    )


def evaluate_dirs(ref_dir, cand_dir, out_csv, bitrate_bps=None) -> list[dict]:
    """Score every WAV in ``ref_dir`` against the same-named file in ``cand_dir``.

    Writes one CSV row per pair followed by a ``MEAN`` row.
    """
    from .audio import read_wav

    rows = []
    for ref_path in sorted(Path(ref_dir).glob("*.wav")):
        cand_path = Path(cand_dir) / ref_path.name
        if not cand_path.exists():
            continue
        ref, _ = read_wav(ref_path)
        cand, _ = read_wav(cand_path)
        rows.append({"name": ref_path.name, **asdict(evaluate_pair(ref, cand, bitrate_bps))})
    if not rows:
        raise ValueError(f"no paired WAV files between {ref_dir} and {cand_dir}")
    fields = ["name", "mcd", "mel_ssim", "snr", "stft_dist", "bitrate_bps"]
    mean = {"name": "MEAN"}
    for f in fields[1:]:
        vals = [r[f] for r in rows if r[f] is not None]
        mean[f] = float(np.mean(vals)) if vals else None
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows + [mean])
    return rows + [mean]
