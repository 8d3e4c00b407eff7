import csv
import math

import librosa
import numpy as np
import pytest
from scipy.fft import dct
from skimage.metrics import structural_similarity

from sqtts.audio import write_wav
from sqtts.metrics import (evaluate_dirs, evaluate_pair, log_mel, mcd, mel_filterbank, mel_ssim, snr,
                           ssim, stft_dist)
from sqtts.synthetic import speech_like

RNG = np.random.default_rng(0)
NOISE = RNG.normal(0, 0.1, 16000)
SPEECH = speech_like(1.0, seed=1)


def librosa_mcd(x, y):
    def cep(s):
        mel = librosa.feature.melspectrogram(y=s, sr=16000, n_fft=400, hop_length=160, win_length=400,
                                             window="hann", center=False, power=2.0, n_mels=80,
                                             htk=True, norm=None)
        return dct(np.log(np.maximum(mel.T, 1e-10)), type=2, norm="ortho", axis=-1)[:, 1:14]

    diff = cep(x) - cep(y)
    return float(np.mean(10 / np.log(10) * np.sqrt(2 * np.sum(diff**2, axis=-1))))


def test_filterbank_matches_librosa():
    ref = librosa.filters.mel(sr=16000, n_fft=400, n_mels=80, htk=True, norm=None)
    np.testing.assert_allclose(mel_filterbank(), ref, atol=1e-6)


def test_log_mel_matches_librosa():
    ref = librosa.feature.melspectrogram(y=SPEECH.astype(np.float64), sr=16000, n_fft=400, hop_length=160,
                                         center=False, power=2.0, n_mels=80, htk=True, norm=None)
    ours = log_mel(SPEECH)
    assert ours.shape == (ref.shape[1], 80)
    np.testing.assert_allclose(ours, np.log(np.maximum(ref.T, 1e-10)), atol=1e-5)


def test_mcd_identity_and_symmetry():
    assert mcd(SPEECH, SPEECH) == 0.0
    other = speech_like(1.0, seed=2)
    assert mcd(SPEECH, other) == pytest.approx(mcd(other, SPEECH), rel=1e-12)
    assert mcd(SPEECH, other) > 0


def test_mcd_noise_at_minus_6_db_matches_reference():
    # white noise against itself plus an independent copy 6 dB down
    extra = np.random.default_rng(1).normal(0, 0.1 * 10 ** (-6 / 20), 16000)
    y = NOISE + extra
    ours = mcd(NOISE, y)
    assert ours > 0
    assert ours == pytest.approx(librosa_mcd(NOISE, y), rel=0.01)


def test_mcd_rejects_silence():
    with pytest.raises(ValueError, match="silent"):
        mcd(np.zeros(16000), SPEECH)


def test_ssim_matches_skimage():
    a = log_mel(SPEECH)
    b = log_mel(SPEECH + 0.05 * NOISE)
    rng = float(a.max() - a.min())
    ref = structural_similarity(a, b, data_range=rng, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, b, rng) == pytest.approx(ref, abs=1e-9)


def test_mel_ssim_examples():
    assert mel_ssim(SPEECH, SPEECH) == pytest.approx(1.0)
    assert mel_ssim(SPEECH, -SPEECH) == pytest.approx(1.0)


def test_mel_ssim_independent_noise_low():
    values = [mel_ssim(np.random.default_rng(s).normal(size=16000),
                       np.random.default_rng(100 + s).normal(size=16000)) for s in range(10)]
    assert max(values) < 0.5
    assert all(-1 <= v <= 1 for v in values)


def test_snr_examples():
    assert snr(SPEECH, SPEECH) == 100.0
    assert snr(SPEECH, np.zeros_like(SPEECH)) == pytest.approx(0.0, abs=1e-12)
    assert snr(SPEECH, 0.5 * SPEECH) == pytest.approx(10 * math.log10(4), abs=1e-9)
    with pytest.raises(ValueError):
        snr(np.zeros(10), np.ones(10))


def test_stft_dist():
    assert stft_dist(SPEECH, SPEECH) == 0.0
    near = stft_dist(SPEECH, SPEECH + 0.01 * NOISE)
    far = stft_dist(SPEECH, SPEECH + 0.3 * NOISE)
    assert 0 < near < far


def test_metrics_trim_to_common_length():
    r = evaluate_pair(SPEECH, np.concatenate([SPEECH, np.ones(500)]), bitrate_bps=8000)
    assert r.mcd == 0 and r.snr == 100 and r.bitrate_bps == 8000


def test_evaluate_dirs(tmp_path):
    ref_dir, cand_dir = tmp_path / "ref", tmp_path / "cand"
    ref_dir.mkdir()
    cand_dir.mkdir()
    for i in range(3):
        s = speech_like(0.5, seed=i)
        write_wav(ref_dir / f"{i}.wav", s)
        write_wav(cand_dir / f"{i}.wav", 0.5 * s)
    write_wav(ref_dir / "unpaired.wav", SPEECH)
    out = tmp_path / "scores.csv"
    rows = evaluate_dirs(ref_dir, cand_dir, out, bitrate_bps=8000)
    assert [r["name"] for r in rows] == ["0.wav", "1.wav", "2.wav", "MEAN"]
    table = list(csv.DictReader(out.open()))
    assert float(table[-1]["snr"]) == pytest.approx(np.mean([r["snr"] for r in rows[:3]]))
    assert float(table[0]["snr"]) == pytest.approx(6.02, abs=0.05)
    with pytest.raises(ValueError, match="no paired"):
        evaluate_dirs(ref_dir, tmp_path, tmp_path / "x.csv")
