"""Reconstruction + adversarial training for the scalar codec."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .codec import ScalarCodec
from .config import CodecTrainConfig, DiscriminatorConfig

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class CodecLossReport:
    l1_time: float
    stft_mse: float
    adv_g: float
    adv_d: float
    total_g: float


def stft_magnitude(x: torch.Tensor, window: int) -> torch.Tensor:
    """Hann-windowed magnitude STFT, hop = window/4, no centering, orthonormal scaling."""
    if x.shape[-1] < window:
        x = F.pad(x, (0, window - x.shape[-1]))
    spec = torch.stft(
        x,
        n_fft=window,
        hop_length=window // 4,
        window=torch.hann_window(window, dtype=x.dtype, device=x.device),
        center=False,
        normalized=True,
        return_complex=True,
    )
    return spec.abs()


def reconstruction_loss(x, x_hat, stft_windows=(512, 1024, 2048)):
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    l1 = (x - x_hat).abs().mean()
    stft = sum(
        F.mse_loss(stft_magnitude(x_hat, w), stft_magnitude(x, w)) for w in stft_windows
    ) / len(stft_windows)
    return l1, stft


class ScaleDiscriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        c = config.channels
        layers = [nn.Conv1d(1, c, 15, padding=7)]
        for _ in range(config.num_layers):
            c_out = min(c * 2, config.max_channels)
            layers.append(nn.Conv1d(c, c_out, 15, stride=4, padding=7))
            c = c_out
        layers.append(nn.Conv1d(c, c, 5, padding=2))
        self.layers = nn.ModuleList(layers)
        self.out = nn.Conv1d(c, 1, 3, padding=1)

    def forward(self, x):
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2)
        return self.out(x)[:, 0]


class MultiScaleDiscriminator(nn.Module):
    """Waveform discriminators applied at 1x, 2x, 4x, ... average-pooled rates."""

    def __init__(self, config: DiscriminatorConfig | None = None):
        super().__init__()
        self.config = config or DiscriminatorConfig()
        self.discriminators = nn.ModuleList(
            ScaleDiscriminator(self.config) for _ in range(self.config.num_scales)
        )

    def forward(self, wav):
        x = wav[:, None, :] if wav.dim() == 2 else wav
        scores = []
        for i, disc in enumerate(self.discriminators):
            if i:
                x = F.avg_pool1d(x, 4, stride=2, padding=1, count_include_pad=False)
            scores.append(disc(x))
        return scores


def discriminator_scores(x, disc: MultiScaleDiscriminator):
    return disc(x)


def adversarial_losses(real_scores, fake_scores):
    """Hinge losses averaged over scales: (generator loss, discriminator loss)."""
    if len(real_scores) != len(fake_scores):
        raise ValueError("real and fake score lists differ in length")
    n = len(fake_scores)
    adv_d = sum(F.relu(1 - r).mean() + F.relu(1 + f).mean() for r, f in zip(real_scores, fake_scores)) / n
    adv_g = sum(-f.mean() for f in fake_scores) / n
    return adv_g, adv_d


class CodecTrainer:
    """Owns codec, discriminator, both Adam optimizers and the data RNG.

    Everything needed to resume bit-exactly lives in ``state_dict()``.
    """

    def __init__(self, codec: ScalarCodec, disc: MultiScaleDiscriminator, config: CodecTrainConfig, seed: int = 0):
        self.codec = codec
        self.disc = disc
        self.config = config
        self.opt_g = torch.optim.Adam(codec.parameters(), lr=config.lr)
        self.opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr)
        self.step_count = 0
        self.rng = torch.Generator().manual_seed(seed)

    def sample_batch(self, clips) -> torch.Tensor:
        seg = self.config.segment_length
        idx = torch.randint(len(clips), (self.config.batch_size,), generator=self.rng)
        batch = []
        for i in idx.tolist():
            clip = clips[i]
            if len(clip) <= seg:
                batch.append(np.pad(clip, (0, seg - len(clip))))
                continue
            off = int(torch.randint(len(clip) - seg + 1, (1,), generator=self.rng))
            batch.append(clip[off : off + seg])
        return torch.as_tensor(np.stack(batch), dtype=torch.float32)

    def adversarial_active(self) -> bool:
        return self.config.w_adv > 0 and self.step_count >= self.config.adv_warmup_steps

    def train_step(self, batch: torch.Tensor) -> CodecLossReport:
        cfg = self.config
        self.codec.train()
        self.disc.train()
        x_hat, _ = self.codec(batch)
        l1, stft = reconstruction_loss(batch, x_hat, cfg.stft_windows)
        total_g = cfg.w_l1 * l1 + cfg.w_stft * stft

        real = self.disc(batch)
        fake_detached = self.disc(x_hat.detach())
        _, adv_d = adversarial_losses(real, fake_detached)
        if self.adversarial_active():
            adv_g, _ = adversarial_losses(real, self.disc(x_hat))
            total_g = total_g + cfg.w_adv * adv_g
        else:
            adv_g = sum(-f.mean() for f in fake_detached).detach() / len(fake_detached)

        values = {"l1_time": l1, "stft_mse": stft, "adv_g": adv_g, "adv_d": adv_d, "total_g": total_g}
        bad = [k for k, v in values.items() if not torch.isfinite(v)]
        if bad:
            raise NonFiniteLossError(f"step {self.step_count}: non-finite {bad}; no parameters were updated")

        # both backward passes run before either optimizer steps, so a bad
        # gradient anywhere leaves every parameter untouched
        self.opt_g.zero_grad(set_to_none=True)
        total_g.backward()
        self.opt_d.zero_grad(set_to_none=True)
        adv_d.backward()
        self._check_grads()
        self.opt_g.step()
        self.opt_d.step()

        self.step_count += 1
        return CodecLossReport(**{k: float(v.detach()) for k, v in values.items()})

    def _check_grads(self):
        for name, module in (("codec", self.codec), ("discriminator", self.disc)):
            for pname, p in module.named_parameters():
                if p.grad is not None and not torch.isfinite(p.grad).all():
                    self.opt_g.zero_grad(set_to_none=True)
                    self.opt_d.zero_grad(set_to_none=True)
                    raise NonFiniteLossError(
                        f"step {self.step_count}: non-finite gradient in {name}.{pname}; no parameters were updated"
                    )

    def state_dict(self) -> dict:
        return {
            "codec": self.codec.state_dict(),
            "disc": self.disc.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "step": self.step_count,
            "rng": self.rng.get_state(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.codec.load_state_dict(state["codec"])
        self.disc.load_state_dict(state["disc"])
        self.opt_g.load_state_dict(state["opt_g"])
        self.opt_d.load_state_dict(state["opt_d"])
        self.step_count = int(state["step"])
        self.rng.set_state(state["rng"])


def train_codec_step(batch, trainer: CodecTrainer) -> CodecLossReport:
    return trainer.train_step(batch)


LOSS_FIELDS = ("step", "l1_time", "stft_mse", "adv_g", "adv_d", "total_g")


def fit_codec(trainer: CodecTrainer, clips, steps: int, log_path=None, on_checkpoint=None, log_every=None):
    """Run ``steps`` more training steps; returns the list of per-step reports."""
    log_every = log_every or trainer.config.log_every
    reports = []
    writer = None
    fh = None
    if log_path is not None:
        log_path = Path(log_path)
        new = not log_path.exists()
        fh = log_path.open("a", newline="")
        writer = csv.writer(fh)
        if new:
            writer.writerow(LOSS_FIELDS)
    try:
        for _ in range(steps):
            rep = trainer.train_step(trainer.sample_batch(clips))
            reports.append(rep)
            if writer is not None:
                writer.writerow([trainer.step_count, rep.l1_time, rep.stft_mse, rep.adv_g, rep.adv_d, rep.total_g])
            if trainer.step_count % log_every == 0:
                log.info("step %d l1 %.4f stft %.4f adv_g %.3f adv_d %.3f", trainer.step_count,
                         rep.l1_time, rep.stft_mse, rep.adv_g, rep.adv_d)
            if on_checkpoint is not None and trainer.step_count % trainer.config.checkpoint_every == 0:
                on_checkpoint(trainer)
    finally:
        if fh is not None:
            fh.close()
    return reports
