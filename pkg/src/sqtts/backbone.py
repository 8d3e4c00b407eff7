"""GPT-2 style transformer denoiser with in-context prefix conditioning.

Per sample the input sequence is::

    [timestep, timing, speaker, text_1 .. text_L, latent_1 .. latent_N]

with learned absolute positions counted from the start of that sequence.
Samples in a batch are laid out contiguously and right-padded; padded slots
are masked out of attention. After the last block only the latent positions
are kept and projected back to the latent width.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .conditioning import ConditionBatch
from .config import BackboneConfig

PREFIX_LEN = 3  # timestep, timing, speaker


def embed_timestep(t, model_dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal features of integer diffusion timesteps: (..., model_dim)."""
    t = torch.as_tensor(t, dtype=torch.float64)
    half = model_dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    angles = t[..., None] * freqs
    return torch.cat([torch.cos(angles), torch.sin(angles)], dim=-1).float()


class TimestepEmbedding(nn.Module):
    def __init__(self, model_dim: int):
        super().__init__()
        self.model_dim = model_dim
        self.mlp = nn.Sequential(nn.Linear(model_dim, model_dim), nn.SiLU(), nn.Linear(model_dim, model_dim))

    def forward(self, t):
        return self.mlp(embed_timestep(t, self.model_dim))


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, mask):
        B, L, D = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        y = F.scaled_dot_product_attention(q, k, v, attn_mask=mask)
        return self.proj(y.transpose(1, 2).reshape(B, L, D))


class Block(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        dim = config.model_dim
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, config.num_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, config.mlp_ratio * dim), nn.GELU(), nn.Linear(config.mlp_ratio * dim, dim)
        )
        self.drop = nn.Dropout(config.dropout)

    def forward(self, x, mask):
        x = x + self.drop(self.attn(self.ln1(x), mask))
        return x + self.drop(self.mlp(self.ln2(x)))


class DiffusionTransformer(nn.Module):
    """Predicts the clean latent grid from a noisy one.

    The output head ends in tanh, so predictions live in [-1, 1] like the
    quantizer lattice; rounding onto the lattice is left to the sampler.
    """

    def __init__(self, config: BackboneConfig, latent_dim: int, cond_dim: int):
        super().__init__()
        self.config = config
        self.latent_dim = latent_dim
        self.cond_dim = cond_dim
        dim = config.model_dim
        self.time_embed = TimestepEmbedding(dim)
        self.cond_proj = nn.Linear(cond_dim, dim)
        self.latent_in = nn.Linear(latent_dim, dim)
        self.pos = nn.Embedding(config.max_positions, dim)
        nn.init.normal_(self.pos.weight, std=0.02)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.num_layers))
        self.ln_f = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, latent_dim)

    def _layout(self, cond: ConditionBatch, num_latents: int):
        B = cond.batch_size
        text_len = cond.text_lengths.to(torch.long)
        if cond.latent_lengths is None:
            lat_len = torch.full((B,), num_latents, dtype=torch.long)
        else:
            lat_len = cond.latent_lengths.to(torch.long)
        total = PREFIX_LEN + text_len + lat_len
        seq_len = PREFIX_LEN + cond.text.shape[1] + num_latents
        if int(total.max()) > self.config.max_positions:
            raise ValueError(f"sequence of {int(total.max())} tokens exceeds max_positions={self.config.max_positions}")
        latent_pos = PREFIX_LEN + text_len[:, None] + torch.arange(num_latents)[None]
        return total, seq_len, latent_pos

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, cond: ConditionBatch) -> torch.Tensor:
        B, N, d = x_t.shape
        if d != self.latent_dim:
            raise ValueError(f"latent width {d} != {self.latent_dim}")
        if cond.width != self.cond_dim:
            raise ValueError(f"condition width {cond.width} != cond_dim {self.cond_dim}")
        if cond.batch_size != B:
            raise ValueError(f"condition batch {cond.batch_size} != latent batch {B}")
        dim = self.config.model_dim
        total, seq_len, latent_pos = self._layout(cond, N)
        t = torch.as_tensor(t).reshape(-1).expand(B)

        seq = x_t.new_zeros(B, seq_len, dim)
        seq[:, 0] = self.time_embed(t)
        seq[:, 1] = self.cond_proj(cond.timing)
        seq[:, 2] = self.cond_proj(cond.speaker)
        L = cond.text.shape[1]
        seq[:, PREFIX_LEN : PREFIX_LEN + L] = self.cond_proj(cond.text)
        # latents overwrite the padded tail of shorter texts
        idx = latent_pos[..., None].expand(B, N, dim)
        seq = seq.scatter(1, idx, self.latent_in(x_t))

        positions = torch.arange(seq_len)
        seq = seq + self.pos(positions.clamp(max=self.config.max_positions - 1))[None]

        valid = positions[None] < total[:, None]  # (B, S)
        mask = valid[:, None, None, :]
        if self.config.use_causal_mask:
            mask = mask & torch.ones(seq_len, seq_len, dtype=torch.bool).tril()[None, None]
        for block in self.blocks:
            seq = block(seq, mask)
        out = torch.gather(self.ln_f(seq), 1, idx)
        return torch.tanh(self.head(out))
