"""Text, speaker and timing conditioning.

All three encoders emit ``cond_dim``-wide vectors. Encoders are looked up by
backend name so that heavier pretrained front-ends can be registered behind
the same call signatures without touching the diffusion code.
"""
from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ConditioningConfig


def text_to_ids(text: str) -> list[int]:
    """NFC-normalized UTF-8 bytes; one id per byte."""
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    return list(unicodedata.normalize("NFC", text).encode("utf-8"))


def sinusoidal_features(x: torch.Tensor, dim: int, min_period: float, max_period: float) -> torch.Tensor:
    """[sin, cos] features of scalar inputs at ``dim // 2`` geometrically spaced periods."""
    half = dim // 2
    periods = torch.exp(torch.linspace(math.log(min_period), math.log(max_period), half, dtype=torch.float64))
    angles = 2 * math.pi * x.to(torch.float64)[..., None] / periods
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1).float()


@dataclass
class ConditionBundle:
    """Conditioning for a single utterance."""

    text_tokens: torch.Tensor  # (len_text, cond_dim)
    speaker_embedding: torch.Tensor  # (cond_dim,)
    timing_embedding: torch.Tensor  # (cond_dim,)
    duration_seconds: float

    def __post_init__(self):
        width = self.speaker_embedding.shape[-1]
        if self.text_tokens.dim() != 2 or self.text_tokens.shape[0] < 1:
            raise ValueError("text_tokens must be (len_text >= 1, cond_dim)")
        if self.text_tokens.shape[-1] != width or self.timing_embedding.shape[-1] != width:
            raise ValueError(
                f"condition widths differ: text {self.text_tokens.shape[-1]}, "
                f"speaker {width}, timing {self.timing_embedding.shape[-1]}"
            )
        if not self.duration_seconds > 0:
            raise ValueError("duration_seconds must be positive")


@dataclass
class ConditionBatch:
    """Padded batch of bundles, the form the backbone consumes."""

    text: torch.Tensor  # (B, L_max, cond_dim)
    text_lengths: torch.Tensor  # (B,)
    speaker: torch.Tensor  # (B, cond_dim)
    timing: torch.Tensor  # (B, cond_dim)
    latent_lengths: torch.Tensor | None = None  # (B,) when latents are padded

    @property
    def batch_size(self) -> int:
        return self.text.shape[0]

    @property
    def width(self) -> int:
        return self.text.shape[-1]

    @classmethod
    def collate(cls, bundles: list[ConditionBundle], latent_lengths=None) -> "ConditionBatch":
        lengths = torch.tensor([b.text_tokens.shape[0] for b in bundles])
        text = nn.utils.rnn.pad_sequence([b.text_tokens for b in bundles], batch_first=True)
        return cls(
            text=text,
            text_lengths=lengths,
            speaker=torch.stack([b.speaker_embedding for b in bundles]),
            timing=torch.stack([b.timing_embedding for b in bundles]),
            latent_lengths=None if latent_lengths is None else torch.as_tensor(latent_lengths),
        )

    def repeat(self, n: int) -> "ConditionBatch":
        return ConditionBatch(
            text=self.text.repeat(n, 1, 1),
            text_lengths=self.text_lengths.repeat(n),
            speaker=self.speaker.repeat(n, 1),
            timing=self.timing.repeat(n, 1),
            latent_lengths=None if self.latent_lengths is None else self.latent_lengths.repeat(n),
        )


class CharTextEncoder(nn.Module):
    """Byte-level embedding followed by a small transformer encoder."""

    def __init__(self, config: ConditioningConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Embedding(256, config.cond_dim)
        self.pos = nn.Embedding(config.max_text_len, config.cond_dim)
        layer = nn.TransformerEncoderLayer(
            config.cond_dim, config.text_heads, 4 * config.cond_dim,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, config.text_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.cond_dim)

    def forward(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        ids = [torch.tensor(text_to_ids(t)) for t in texts]
        lengths = torch.tensor([len(i) for i in ids])
        if lengths.max() > self.config.max_text_len:
            raise ValueError(f"text longer than max_text_len={self.config.max_text_len} bytes")
        ids = nn.utils.rnn.pad_sequence(ids, batch_first=True)
        pad = torch.arange(ids.shape[1])[None] >= lengths[:, None]
        x = self.embed(ids) + self.pos(torch.arange(ids.shape[1]))[None]
        x = self.encoder(x, src_key_padding_mask=pad)
        return self.norm(x), lengths


class FrameSpeakerEncoder(nn.Module):
    """Per-frame log-spectrum MLP, mean-pooled over time.

    Frames do not overlap and every layer is pointwise in time, so the
    embedding of a reference equals the embedding of that reference tiled.
    """

    def __init__(self, config: ConditioningConfig, hidden: int = 256):
        super().__init__()
        self.frame = config.speaker_frame
        self.min_samples = int(round(config.min_reference_seconds * 16000))
        bins = self.frame // 2 + 1
        self.frame_net = nn.Sequential(
            nn.Conv1d(bins, hidden, 1), nn.GELU(), nn.Conv1d(hidden, hidden, 1), nn.GELU()
        )
        self.proj = nn.Linear(hidden, config.cond_dim)

    def frame_features(self, wav: torch.Tensor) -> torch.Tensor:
        """(L,) waveform -> (hidden, num_frames) feature map."""
        n = wav.shape[-1] // self.frame
        frames = wav[: n * self.frame].reshape(n, self.frame)
        window = torch.hann_window(self.frame, periodic=False, dtype=wav.dtype)
        logspec = torch.log(torch.fft.rfft(frames * window).abs() + 1e-5)
        return self.frame_net(logspec.T[None])[0]

    def forward(self, wavs: list[torch.Tensor]) -> torch.Tensor:
        out = []
        for wav in wavs:
            wav = torch.as_tensor(wav, dtype=torch.float32)
            if wav.shape[-1] < self.min_samples:
                raise ValueError(
                    f"reference has {wav.shape[-1]} samples; need at least {self.min_samples} (0.5 s)"
                )
            out.append(self.frame_features(wav).mean(dim=1))
        return self.proj(torch.stack(out))


class TimingEncoder(nn.Module):
    def __init__(self, config: ConditioningConfig):
        super().__init__()
        self.dim = config.cond_dim
        self.mlp = nn.Sequential(nn.Linear(self.dim, self.dim), nn.SiLU(), nn.Linear(self.dim, self.dim))

    def forward(self, seconds) -> torch.Tensor:
        seconds = torch.as_tensor(seconds, dtype=torch.float64).reshape(-1)
        if (seconds <= 0).any() or not torch.isfinite(seconds).all():
            raise ValueError(f"durations must be positive and finite, got {seconds.tolist()}")
        return self.mlp(sinusoidal_features(seconds, self.dim, 0.05, 200.0))


TEXT_BACKENDS: dict[str, Callable[[ConditioningConfig], nn.Module]] = {"char": CharTextEncoder}
SPEAKER_BACKENDS: dict[str, Callable[[ConditioningConfig], nn.Module]] = {"conv": FrameSpeakerEncoder}


def register_text_backend(name: str, factory) -> None:
    TEXT_BACKENDS[name] = factory


def register_speaker_backend(name: str, factory) -> None:
    SPEAKER_BACKENDS[name] = factory


def _lookup(registry, name, kind):
    try:
        return registry[name]
    except KeyError:
        raise ValueError(f"unknown {kind} backend {name!r}; registered: {sorted(registry)}") from None


class Conditioner(nn.Module):
    def __init__(self, config: ConditioningConfig | None = None):
        super().__init__()
        self.config = config or ConditioningConfig()
        self.text_encoder = _lookup(TEXT_BACKENDS, self.config.text_backend, "text")(self.config)
        self.speaker_encoder = _lookup(SPEAKER_BACKENDS, self.config.speaker_backend, "speaker")(self.config)
        self.timing_encoder = TimingEncoder(self.config)

    def forward(self, texts, references, durations, latent_lengths=None) -> ConditionBatch:
        text, lengths = self.text_encoder(list(texts))
        return ConditionBatch(
            text=text,
            text_lengths=lengths,
            speaker=self.speaker_encoder(list(references)),
            timing=self.timing_encoder(durations),
            latent_lengths=None if latent_lengths is None else torch.as_tensor(latent_lengths),
        )

    def bundle(self, text: str, reference, duration_seconds: float) -> ConditionBundle:
        batch = self([text], [reference], [duration_seconds])
        return ConditionBundle(
            text_tokens=batch.text[0, : batch.text_lengths[0]],
            speaker_embedding=batch.speaker[0],
            timing_embedding=batch.timing[0],
            duration_seconds=float(duration_seconds),
        )


def encode_text(text: str, encoder: CharTextEncoder) -> torch.Tensor:
    tokens, lengths = encoder([text])
    return tokens[0, : lengths[0]]


def embed_speaker(reference, encoder: FrameSpeakerEncoder) -> torch.Tensor:
    return encoder([reference])[0]


def embed_timing(duration_seconds: float, encoder: TimingEncoder) -> torch.Tensor:
    return encoder([duration_seconds])[0]
