"""Parameter-free scalar quantization onto the lattice {k/S : |k| <= S}.

Values are squashed with tanh and rounded to one of ``2S+1`` levels. Rounding
uses the platform's round-half-to-even (``torch.round`` / ``np.round``); exact
ties only occur on a measure-zero set of inputs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import torch

from . import _kernels

SQC1_MAGIC = b"SQC1"
_SQC1_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class QuantizerConfig:
    S: int = 9
    d: int = 32

    def __post_init__(self):
        if int(self.S) != self.S or self.S < 1:
            raise ValueError(f"S must be a positive integer, got {self.S!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")

    @property
    def levels(self) -> int:
        return 2 * self.S + 1

    @property
    def bits_per_dim(self) -> int:
        # ceil(log2(2S+1)) without floating point: codes live in [0, 2S]
        return (2 * self.S).bit_length()


def levels_count(config: QuantizerConfig) -> int:
    return config.levels


def bitrate_bps(config: QuantizerConfig, frame_rate: float) -> float:
    """Bits per second when every code is stored in a fixed-width integer."""
    if not frame_rate > 0:
        raise ValueError(f"frame_rate must be positive, got {frame_rate!r}")
    return config.bits_per_dim * config.d * frame_rate


def _check_finite(h):
    if isinstance(h, torch.Tensor):
        bad = ~torch.isfinite(h)
        if bad.any():
            pos = tuple(int(i) for i in torch.nonzero(bad)[0])
            raise ValueError(f"non-finite value {h[pos].item()} at position {pos}")
    else:
        bad = ~np.isfinite(h)
        if bad.any():
            pos = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(f"non-finite value {h[pos]} at position {pos}")


def scalar_quantize(h, config: QuantizerConfig):
    """round(tanh(h) * S) / S, elementwise. Accepts torch tensors or numpy arrays."""
    S = config.S
    if isinstance(h, torch.Tensor):
        _check_finite(h)
        return torch.round(torch.tanh(h) * S) / S
    h = np.asarray(h)
    if not np.issubdtype(h.dtype, np.floating):
        h = h.astype(np.float64)
    _check_finite(h)
    return np.round(np.tanh(h) * S) / S


class _RoundToLattice(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, S):
        return torch.round(x * S) / S

    @staticmethod
    def backward(ctx, grad):
        return grad, None


def quantize_with_ste(h: torch.Tensor, config: QuantizerConfig) -> torch.Tensor:
    """Forward: scalar_quantize. Backward: the gradient of tanh alone."""
    _check_finite(h.detach())
    return _RoundToLattice.apply(torch.tanh(h), config.S)


def project_to_lattice(x, config: QuantizerConfig):
    """Round values already in data space (no tanh) onto the lattice, clipping to [-1, 1]."""
    S = config.S
    if isinstance(x, torch.Tensor):
        return torch.round(x.clamp(-1.0, 1.0) * S) / S
    return np.round(np.clip(x, -1.0, 1.0) * S) / S


def on_lattice(q, config: QuantizerConfig) -> np.ndarray:
    """Elementwise mask of entries exactly equal to k/S with |k| <= S."""
    q = q.detach().cpu().numpy() if isinstance(q, torch.Tensor) else np.asarray(q)
    S = q.dtype.type(config.S)
    k = np.round(q * S)
    return (q == k / S) & (np.abs(k) <= config.S)


def pack_codes(q, config: QuantizerConfig) -> np.ndarray:
    """Map lattice values k/S to integer codes k + S in [0, 2S]."""
    q = q.detach().cpu().numpy() if isinstance(q, torch.Tensor) else np.asarray(q)
    ok = on_lattice(q, config)
    if not ok.all():
        pos = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise ValueError(
            f"value {q[pos]!r} at position {pos} is not on the S={config.S} lattice; "
            "was the latent quantized?"
        )
    return (np.round(q * config.S) + config.S).astype(np.int64)


def unpack_codes(codes, config: QuantizerConfig, dtype=np.float32) -> np.ndarray:
    codes = np.asarray(codes)
    if not np.issubdtype(codes.dtype, np.integer):
        raise TypeError(f"codes must be integers, got {codes.dtype}")
    bad = (codes < 0) | (codes > 2 * config.S)
    if bad.any():
        pos = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"code {codes[pos]} at {pos} outside [0, {2 * config.S}]")
    S = np.dtype(dtype).type(config.S)
    return (codes - config.S).astype(dtype) / S


def serialize_codes(codes, config: QuantizerConfig) -> bytes:
    """Encode a (num_frames, d) code grid as an SQC1 byte stream.

    Layout: 16-byte little-endian header (magic, S, d, num_frames) followed by
    one byte-aligned record per frame of d fixed-width codes.
    """
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != config.d:
        raise ValueError(f"expected codes of shape (num_frames, {config.d}), got {codes.shape}")
    if codes.size and (codes.min() < 0 or codes.max() > 2 * config.S):
        raise ValueError(f"codes outside [0, {2 * config.S}]")
    header = _SQC1_HEADER.pack(SQC1_MAGIC, config.S, config.d, codes.shape[0])
    body = _kernels.pack_bits(codes, config.bits_per_dim)
    return header + body.tobytes()


def deserialize_codes(data: bytes) -> tuple[np.ndarray, QuantizerConfig]:
    if len(data) < _SQC1_HEADER.size:
        raise ValueError("truncated SQC1 stream: missing header")
    magic, S, d, num_frames = _SQC1_HEADER.unpack_from(data)
    if magic != SQC1_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {SQC1_MAGIC!r}")
    config = QuantizerConfig(S=S, d=d)
    nbytes = _kernels.frame_nbytes(d, config.bits_per_dim)
    expected = _SQC1_HEADER.size + nbytes * num_frames
    if len(data) != expected:
        raise ValueError(f"SQC1 stream is {len(data)} bytes, header implies {expected}")
    body = np.frombuffer(data, dtype=np.uint8, offset=_SQC1_HEADER.size).reshape(num_frames, nbytes)
    codes = _kernels.unpack_bits(body, d, config.bits_per_dim)
    if codes.size and codes.max() > 2 * S:
        raise ValueError(f"decoded code exceeds 2S={2 * S}; stream corrupt")
    return codes, config
