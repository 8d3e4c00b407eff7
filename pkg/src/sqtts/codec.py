"""Causal convolutional encoder/decoder around the scalar quantizer."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import CodecConfig
from .quantizer import quantize_with_ste


class CausalConv1d(nn.Conv1d):
    """Conv1d with left-only padding so output t never sees input > t."""

    def __init__(self, in_ch, out_ch, kernel_size, stride=1, dilation=1):
        super().__init__(in_ch, out_ch, kernel_size, stride=stride, dilation=dilation)
        self.left_pad = dilation * (kernel_size - 1) - (stride - 1)

    def forward(self, x):
        return super().forward(F.pad(x, (self.left_pad, 0)))


class CausalConvTranspose1d(nn.ConvTranspose1d):
    """Transposed conv upsampling by ``stride``; the right-edge overlap is trimmed."""

    def __init__(self, in_ch, out_ch, stride):
        super().__init__(in_ch, out_ch, kernel_size=2 * stride, stride=stride)
        self.trim = stride

    def forward(self, x):
        return super().forward(x)[..., : -self.trim]


class ResidualUnit(nn.Module):
    def __init__(self, channels, kernel_size, dilation):
        super().__init__()
        self.conv = CausalConv1d(channels, channels, kernel_size, dilation=dilation)

    def forward(self, x):
        return x + self.conv(F.elu(x))


def channel_schedule(config: CodecConfig) -> list[int]:
    """Channel width entering each encoder block, plus the bottleneck width."""
    return [
        min(config.base_channels * 2**i, config.max_channels)
        for i in range(len(config.strides) + 1)
    ]


class Encoder(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        chans = channel_schedule(config)
        k = config.kernel_size
        self.stem = CausalConv1d(1, chans[0], k)
        blocks = []
        for i, stride in enumerate(config.strides):
            blocks.append(
                nn.Sequential(
                    ResidualUnit(chans[i], k, 1),
                    ResidualUnit(chans[i], k, 3),
                    nn.ELU(),
                    CausalConv1d(chans[i], chans[i + 1], 2 * stride, stride=stride),
                )
            )
        self.blocks = nn.Sequential(*blocks)
        self.proj = nn.Conv1d(chans[-1], config.d, 1)

    def forward(self, x):
        # (B, 1, L) -> (B, d, L // hop) unbounded pre-activations
        return self.proj(F.elu(self.blocks(self.stem(x))))


class Decoder(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        chans = channel_schedule(config)
        k = config.kernel_size
        self.proj = CausalConv1d(config.d, chans[-1], k)
        blocks = []
        for i in reversed(range(len(config.strides))):
            blocks.append(
                nn.Sequential(
                    nn.ELU(),
                    CausalConvTranspose1d(chans[i + 1], chans[i], config.strides[i]),
                    ResidualUnit(chans[i], k, 1),
                    ResidualUnit(chans[i], k, 3),
                )
            )
        self.blocks = nn.Sequential(*blocks)
        self.head = CausalConv1d(chans[0], 1, k)

    def forward(self, q):
        return self.head(F.elu(self.blocks(self.proj(q))))


RESIDUAL_INIT_GAIN = 0.1


def _init_conv(m):
    # variance-preserving init; the torch default shrinks activations through
    # the deep unnormalized stacks and stalls early training
    if isinstance(m, nn.ConvTranspose1d):
        fan_in = m.in_channels * m.kernel_size[0] // m.stride[0]
    elif isinstance(m, nn.Conv1d):
        fan_in = m.in_channels * m.kernel_size[0]
    else:
        return
    nn.init.normal_(m.weight, std=1.0 / math.sqrt(fan_in))
    nn.init.zeros_(m.bias)


class ScalarCodec(nn.Module):
    def __init__(self, config: CodecConfig | None = None):
        super().__init__()
        self.config = config or CodecConfig()
        self.quantizer = self.config.quantizer
        self.encoder = Encoder(self.config)
        self.decoder = Decoder(self.config)
        self.apply(_init_conv)
        # near-identity residual branches at init; full-gain branches compound
        # through the unnormalized stack and park the decoder at silence
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, ResidualUnit):
                    m.conv.weight.mul_(RESIDUAL_INIT_GAIN)

    def encode(self, wav: torch.Tensor) -> torch.Tensor:
        """(B, L) or (L,) waveform -> lattice-valued latents (B, num_frames, d) / (num_frames, d)."""
        squeeze = wav.dim() == 1
        if squeeze:
            wav = wav[None]
        hop = self.config.hop_length
        if wav.shape[-1] < hop:
            raise ValueError(f"waveform has {wav.shape[-1]} samples, need at least one frame ({hop})")
        h = self.encoder(wav[:, None, :]).transpose(1, 2)
        q = quantize_with_ste(h, self.quantizer)
        return q[0] if squeeze else q

    def decode(self, q: torch.Tensor) -> torch.Tensor:
        """(B, num_frames, d) or (num_frames, d) latents -> waveform of num_frames * hop samples."""
        squeeze = q.dim() == 2
        if squeeze:
            q = q[None]
        if q.shape[-1] != self.config.d:
            raise ValueError(f"latent width {q.shape[-1]} != d={self.config.d}")
        wav = self.decoder(q.transpose(1, 2))[:, 0]
        return wav[0] if squeeze else wav

    def forward(self, wav):
        q = self.encode(wav)
        return self.decode(q), q


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


@torch.no_grad()
def encode_waveform(codec: ScalarCodec, wav) -> torch.Tensor:
    """Inference helper: numpy/tensor waveform -> (num_frames, d) lattice latents."""
    wav = torch.as_tensor(wav, dtype=torch.float32)
    return codec.encode(wav)


@torch.no_grad()
def decode_latents(codec: ScalarCodec, q) -> torch.Tensor:
    return codec.decode(torch.as_tensor(q, dtype=torch.float32))
