"""DDPM over scalar latent grids with clean-signal (x0) prediction.

Timesteps are 1-based: ``t`` in [1, T] indexes ``alphas_cumprod[t - 1]`` and
``t = 0`` denotes the clean signal. A denoiser is any callable
``model(x_t, t, cond) -> x0_hat`` working on batched ``(B, frames, d)`` grids
with a ``(B,)`` integer timestep tensor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .quantizer import QuantizerConfig, project_to_lattice

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    betas: torch.Tensor
    alphas_cumprod: torch.Tensor

    @property
    def num_train_steps(self) -> int:
        return len(self.betas)

    def abar(self, t) -> torch.Tensor:
        """alpha-bar at 1-based step(s) t, with abar(0) = 1."""
        t = torch.as_tensor(t, dtype=torch.long)
        if (t < 0).any() or (t > self.num_train_steps).any():
            raise ValueError(f"timestep outside [0, {self.num_train_steps}]: {t.tolist()}")
        padded = torch.cat([torch.ones(1, dtype=self.alphas_cumprod.dtype), self.alphas_cumprod])
        return padded[t]


def make_schedule(num_train_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if not 0 < beta_start < beta_end < 1:
        raise ValueError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    if num_train_steps < 1:
        raise ValueError("num_train_steps must be >= 1")
    betas = torch.linspace(beta_start, beta_end, num_train_steps, dtype=torch.float64)
    return NoiseSchedule(betas=betas, alphas_cumprod=torch.cumprod(1 - betas, dim=0))


def _bcast(v: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return v.to(like.dtype).reshape(-1, *([1] * (like.dim() - 1)))


def q_sample(x0, t, noise, schedule: NoiseSchedule):
    """sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise; ``t`` is an int or a (B,) tensor."""
    if x0.shape != noise.shape:
        raise ValueError(f"x0 {tuple(x0.shape)} and noise {tuple(noise.shape)} differ")
    abar = schedule.abar(t)
    if abar.dim() == 0:
        return abar.sqrt().to(x0.dtype) * x0 + (1 - abar).sqrt().to(x0.dtype) * noise
    return _bcast(abar.sqrt(), x0) * x0 + _bcast((1 - abar).sqrt(), x0) * noise


def posterior(x0_hat, x_t, t, t_prev, schedule: NoiseSchedule):
    """Mean and variance of q(x_{t_prev} | x_t, x0_hat) for any t_prev < t."""
    abar_t = schedule.abar(t)
    abar_s = schedule.abar(t_prev)
    beta = 1 - abar_t / abar_s
    coef_x0 = abar_s.sqrt() * beta / (1 - abar_t)
    coef_xt = (abar_t / abar_s).sqrt() * (1 - abar_s) / (1 - abar_t)
    var = (1 - abar_s) / (1 - abar_t) * beta
    if abar_t.dim():
        coef_x0, coef_xt, var = (_bcast(v, x_t) for v in (coef_x0, coef_xt, var))
    else:
        coef_x0, coef_xt, var = (v.to(x_t.dtype) for v in (coef_x0, coef_xt, var))
    return coef_x0 * x0_hat + coef_xt * x_t, var


def _check_finite(value: torch.Tensor, what: str):
    if not torch.isfinite(value).all():
        raise FloatingPointError(f"non-finite {what}")


def training_loss(model, x0, cond, schedule: NoiseSchedule, generator=None, mask=None):
    """MSE between model(q_sample(x0, t), t, cond) and x0, with t ~ U{1..T}.

    ``mask`` (B, frames) marks real (non-padded) frames.
    """
    batch = x0.shape[0]
    t = torch.randint(1, schedule.num_train_steps + 1, (batch,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = q_sample(x0, t, noise, schedule)
    x0_hat = model(x_t, t, cond)
    err = (x0_hat - x0) ** 2
    if mask is None:
        loss = err.mean()
    else:
        m = mask[..., None].to(err.dtype)
        loss = (err * m).sum() / (m.sum() * x0.shape[-1])
    _check_finite(loss.detach(), f"diffusion loss (t={t.tolist()})")
    return loss


def inference_timesteps(num_train_steps: int, num_inference_steps: int) -> list[int]:
    """Uniformly strided subset of [1, T], largest first; the final step goes to t = 0."""
    if not 1 <= num_inference_steps <= num_train_steps:
        raise ValueError(
            f"num_inference_steps must be in [1, {num_train_steps}], got {num_inference_steps}"
        )
    ts = np.round(np.arange(1, num_inference_steps + 1) * num_train_steps / num_inference_steps)
    return [int(t) for t in ts[::-1]]


def ddpm_reverse_step(model, x_t, t: int, cond, schedule: NoiseSchedule, t_prev: int | None = None,
                      generator=None, quantizer: QuantizerConfig | None = None, return_x0=False):
    """One ancestral step x_t -> x_{t_prev} (default t_prev = t - 1).

    No noise is added when stepping to t_prev = 0. If ``quantizer`` is given,
    the x0 estimate is projected onto its lattice before forming the posterior.
    """
    if t < 1:
        raise ValueError(f"reverse step needs t >= 1, got {t}")
    t_prev = t - 1 if t_prev is None else t_prev
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev must be in [0, {t}), got {t_prev}")
    batch = x_t.shape[0]
    x0_hat = model(x_t, torch.full((batch,), t, dtype=torch.long), cond)
    if quantizer is not None:
        x0_hat = project_to_lattice(x0_hat, quantizer)
    mean, var = posterior(x0_hat, x_t, t, t_prev, schedule)
    if t_prev == 0:
        x_prev = mean
    else:
        x_prev = mean + var.sqrt() * torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
    return (x_prev, x0_hat) if return_x0 else x_prev


@torch.no_grad()
def sample(model, cond, num_frames: int, schedule: NoiseSchedule, quantizer: QuantizerConfig,
           num_inference_steps: int = 100, batch_size: int = 1, generator=None,
           project_intermediate: bool = False, dump_dir=None):
    """Generate lattice-valued latents of shape (batch_size, num_frames, d).

    The loop's final x0 estimate is rounded onto the quantizer lattice;
    intermediate states stay unconstrained.
    """
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    steps = inference_timesteps(schedule.num_train_steps, num_inference_steps)
    x = torch.randn((batch_size, num_frames, quantizer.d), generator=generator)
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
    x0_hat = None
    for i, t in enumerate(steps):
        t_prev = steps[i + 1] if i + 1 < len(steps) else 0
        x, x0_hat = ddpm_reverse_step(
            model, x, t, cond, schedule, t_prev=t_prev, generator=generator,
            quantizer=quantizer if project_intermediate else None, return_x0=True,
        )
        if dump_dir is not None:
            np.save(dump_dir / f"step_{i:04d}_t{t:04d}.npy", x.numpy())
    return project_to_lattice(x0_hat, quantizer)


def frames_for_duration(seconds: float, frame_rate: float) -> int:
    return max(1, int(round(seconds * frame_rate)))
