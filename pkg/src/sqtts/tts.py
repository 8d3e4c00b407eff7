"""Conditioned latent diffusion model and its trainer."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .backbone import DiffusionTransformer
from .conditioning import ConditionBatch, Conditioner
from .config import RunConfig
from .diffusion import make_schedule, sample, training_loss

log = logging.getLogger(__name__)


@dataclass
class Example:
    text: str
    latents: torch.Tensor  # (num_frames, d), lattice-valued
    reference: torch.Tensor  # waveform used for the speaker embedding
    duration_seconds: float


class TTSModel(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        self.conditioner = Conditioner(config.conditioning)
        self.backbone = DiffusionTransformer(config.backbone, config.codec.d, config.conditioning.cond_dim)
        dc = config.diffusion
        self.schedule = make_schedule(dc.num_train_steps, dc.beta_start, dc.beta_end)

    def denoise(self, x_t, t, cond: ConditionBatch):
        return self.backbone(x_t, t, cond)

    def condition(self, texts, references, durations, latent_lengths=None) -> ConditionBatch:
        return self.conditioner(texts, references, durations, latent_lengths)

    @torch.no_grad()
    def generate(self, text: str, reference, duration_seconds: float, num_frames: int,
                 generator=None, num_inference_steps=None):
        self.eval()
        cond = self.condition([text], [reference], [duration_seconds])
        dc = self.config.diffusion
        return sample(
            self.denoise, cond, num_frames, self.schedule, self.config.codec.quantizer,
            num_inference_steps=num_inference_steps or dc.num_inference_steps,
            generator=generator, project_intermediate=dc.project_intermediate,
        )[0]


def collate_latents(examples: list[Example]):
    lengths = torch.tensor([e.latents.shape[0] for e in examples])
    x0 = nn.utils.rnn.pad_sequence([e.latents for e in examples], batch_first=True)
    mask = torch.arange(x0.shape[1])[None] < lengths[:, None]
    return x0, lengths, mask


class TTSTrainer:
    def __init__(self, model: TTSModel, seed: int = 0):
        self.model = model
        cfg = model.config.tts_train
        self.config = cfg
        self.opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.rng = torch.Generator().manual_seed(seed)
        self.step_count = 0

    def train_step(self, examples: list[Example]) -> float:
        self.model.train()
        idx = torch.randint(len(examples), (self.config.batch_size,), generator=self.rng).tolist()
        batch = [examples[i] for i in idx]
        x0, lengths, mask = collate_latents(batch)
        cond = self.model.condition(
            [e.text for e in batch], [e.reference for e in batch],
            [e.duration_seconds for e in batch], latent_lengths=lengths,
        )
        loss = training_loss(self.model.denoise, x0, cond, self.model.schedule, generator=self.rng, mask=mask)
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.step_count += 1
        return float(loss.detach())

    def fit(self, examples, steps: int, log_path=None, on_checkpoint=None):
        losses = []
        fh = writer = None
        if log_path is not None:
            new = not Path(log_path).exists()
            fh = open(log_path, "a", newline="")
            writer = csv.writer(fh)
            if new:
                writer.writerow(["step", "loss"])
        try:
            for _ in range(steps):
                loss = self.train_step(examples)
                losses.append(loss)
                if writer is not None:
                    writer.writerow([self.step_count, loss])
                if self.step_count % self.config.log_every == 0:
                    log.info("tts step %d loss %.5f", self.step_count, loss)
                if on_checkpoint is not None and self.step_count % self.config.checkpoint_every == 0:
                    on_checkpoint(self)
        finally:
            if fh is not None:
                fh.close()
        return losses

    def state_dict(self) -> dict:
        return {"model": self.model.state_dict(), "opt": self.opt.state_dict(),
                "step": self.step_count, "rng": self.rng.get_state()}

    def load_state_dict(self, state: dict) -> None:
        self.model.load_state_dict(state["model"])
        self.opt.load_state_dict(state["opt"])
        self.step_count = int(state["step"])
        self.rng.set_state(state["rng"])
