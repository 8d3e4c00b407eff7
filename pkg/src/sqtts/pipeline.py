"""End-to-end flows: checkpoint (de)hydration and text-to-speech synthesis."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch

from .audio import read_wav, write_wav
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .codec import ScalarCodec
from .codec_training import CodecTrainer, MultiScaleDiscriminator
from .config import RunConfig, config_diff
from .duration import (DurationEstimate, estimate_duration_heuristic, estimate_duration_llm)
from .tts import TTSModel, TTSTrainer

log = logging.getLogger(__name__)

# sections whose values change tensor shapes or model semantics
MODEL_SECTIONS = ("codec", "backbone", "conditioning", "diffusion")


def build_codec_trainer(config: RunConfig) -> CodecTrainer:
    torch.manual_seed(config.seed)
    codec = ScalarCodec(config.codec)
    disc = MultiScaleDiscriminator(config.discriminator)
    return CodecTrainer(codec, disc, config.codec_train, seed=config.seed)


def save_codec_checkpoint(path, trainer: CodecTrainer, config: RunConfig) -> None:
    save_checkpoint(path, "codec", config, trainer.state_dict())


def load_codec_trainer(path) -> tuple[CodecTrainer, RunConfig]:
    config, state, _ = load_checkpoint(path, kind="codec")
    trainer = build_codec_trainer(config)
    trainer.load_state_dict(state)
    return trainer, config


def load_codec(path) -> tuple[ScalarCodec, RunConfig]:
    """Codec weights from either a codec or a TTS checkpoint."""
    config, state, _ = load_checkpoint(path)
    codec = ScalarCodec(config.codec)
    codec.load_state_dict(state["codec"])
    codec.eval()
    return codec, config


def build_tts_trainer(config: RunConfig) -> TTSTrainer:
    torch.manual_seed(config.seed)
    return TTSTrainer(TTSModel(config), seed=config.seed)


def save_tts_checkpoint(path, trainer: TTSTrainer, codec: ScalarCodec, config: RunConfig) -> None:
    state = trainer.state_dict()
    state["codec"] = codec.state_dict()
    save_checkpoint(path, "tts", config, state)


def check_config(expected: RunConfig | None, found: RunConfig, path) -> None:
    if expected is None:
        return
    a, b = expected.to_dict(), found.to_dict()
    diff = [line for s in MODEL_SECTIONS for line in config_diff(b[s], a[s], s + ".")]
    if diff:
        raise CheckpointError(f"{path}: checkpoint config does not match the requested config:\n  " + "\n  ".join(diff))


def load_tts(path, expected: RunConfig | None = None) -> tuple[TTSModel, ScalarCodec, RunConfig]:
    config, state, _ = load_checkpoint(path, kind="tts")
    check_config(expected, config, path)
    model = TTSModel(config)
    codec = ScalarCodec(config.codec)
    try:
        model.load_state_dict(state["model"])
        codec.load_state_dict(state["codec"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: weights do not fit the stored config: {exc}") from exc
    model.eval()
    codec.eval()
    return model, codec, config


def resolve_duration(text: str, config: RunConfig, duration=None, llm_client=None) -> DurationEstimate:
    dc = config.duration
    if duration is not None:
        seconds = float(duration)
        if not 0 < seconds <= dc.max_seconds:
            raise ValueError(f"duration {seconds} outside (0, {dc.max_seconds}]")
        return DurationEstimate(seconds, "user")
    if llm_client is not None:
        return estimate_duration_llm(text, llm_client, dc.words_per_second, dc.max_seconds)
    return estimate_duration_heuristic(text, dc.words_per_second, dc.max_seconds, dc.min_seconds)


def synthesize(text: str, reference, model: TTSModel, codec: ScalarCodec, seed: int = 0,
               duration=None, llm_client=None, num_inference_steps=None, out_path=None):
    """Text + reference audio -> waveform (numpy float32).

    The sentence duration fixes the number of latent frames, and therefore
    the output length: num_frames * hop samples. With ``out_path`` a 16-bit
    WAV is written next to a JSON sidecar describing the run.
    """
    config = model.config
    if isinstance(reference, (str, Path)):
        ref_path = Path(reference)
        if not ref_path.exists():
            raise FileNotFoundError(f"reference audio {ref_path} not found; pass --reference <wav>")
        reference, _ = read_wav(ref_path, expected_rate=config.codec.sample_rate)
    reference = torch.as_tensor(np.asarray(reference), dtype=torch.float32)
    est = resolve_duration(text, config, duration, llm_client)
    num_frames = est.num_frames(config.codec.frame_rate)
    gen = torch.Generator().manual_seed(seed)
    steps = num_inference_steps or config.diffusion.num_inference_steps
    latents = model.generate(text, reference, est.seconds, num_frames, generator=gen, num_inference_steps=steps)
    with torch.no_grad():
        wav = codec.decode(latents).numpy()
    if out_path is not None:
        out_path = Path(out_path)
        write_wav(out_path, wav, config.codec.sample_rate)
        sidecar = {
            "text": text,
            "duration_seconds": est.seconds,
            "duration_source": est.source,
            "duration_note": est.note,
            "num_frames": num_frames,
            "seed": seed,
            "steps": steps,
        }
        out_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return wav
