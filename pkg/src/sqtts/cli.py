"""Command-line entry point: ``sqtts <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .audio import read_wav, write_wav
from .config import RunConfig
from .data import Manifest, ingest, load_audio
from .duration import LLMClient, fit_words_per_second
from .metrics import evaluate_dirs
from .quantizer import bitrate_bps, deserialize_codes, pack_codes, serialize_codes, unpack_codes

log = logging.getLogger("sqtts")


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    elif args.preset == "toy":
        config = RunConfig.toy()
    else:
        config = RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    return config


def cmd_init_config(args):
    config = RunConfig.toy() if args.preset == "toy" else RunConfig()
    config.save(args.out)
    print(f"wrote {args.out}")


def cmd_ingest(args):
    manifest = ingest(args.audio_dir)
    manifest.write(args.out)
    print(f"{len(manifest)} records written to {args.out}; {len(manifest.skipped)} files skipped")
    return 0


def cmd_train_codec(args):
    from .codec_training import fit_codec
    from .pipeline import build_codec_trainer, load_codec_trainer, save_codec_checkpoint

    if args.resume:
        trainer, config = load_codec_trainer(args.resume)
    else:
        config = _load_config(args)
        trainer = build_codec_trainer(config)
    steps = args.steps if args.steps is not None else config.codec_train.steps - trainer.step_count
    clips = load_audio(Manifest.read(args.manifest).records, config.codec.sample_rate)

    def checkpoint(tr):
        save_codec_checkpoint(args.out, tr, config)

    fit_codec(trainer, clips, steps, log_path=args.log, on_checkpoint=checkpoint)
    checkpoint(trainer)
    print(f"codec trained to step {trainer.step_count}; checkpoint {args.out}")
    return 0


def cmd_train_tts(args):
    from .pipeline import build_tts_trainer, load_checkpoint, load_codec, save_tts_checkpoint
    from .tts import Example

    records = Manifest.read(args.manifest).records
    if args.resume:
        config, state, _ = load_checkpoint(args.resume, kind="tts")
        trainer = build_tts_trainer(config)
        trainer.load_state_dict(state)
        from .codec import ScalarCodec

        codec = ScalarCodec(config.codec)
        codec.load_state_dict(state["codec"])
        codec.eval()
    else:
        codec, codec_config = load_codec(args.codec)
        config = _load_config(args)
        config.codec = codec_config.codec
        config.duration.words_per_second = fit_words_per_second(records)
        trainer = build_tts_trainer(config)
    examples = []
    for rec, wav in zip(records, load_audio(records, config.codec.sample_rate)):
        wav_t = torch.as_tensor(wav)
        with torch.no_grad():
            latents = codec.encode(wav_t)
        examples.append(Example(rec.text, latents, wav_t, rec.duration_seconds))
    steps = args.steps if args.steps is not None else config.tts_train.steps - trainer.step_count

    def checkpoint(tr):
        save_tts_checkpoint(args.out, tr, codec, config)

    trainer.fit(examples, steps, log_path=args.log, on_checkpoint=checkpoint)
    checkpoint(trainer)
    print(f"tts trained to step {trainer.step_count}; checkpoint {args.out}")
    return 0


def cmd_encode(args):
    from .pipeline import load_codec

    codec, config = load_codec(args.checkpoint)
    wav, _ = read_wav(args.input, expected_rate=config.codec.sample_rate)
    with torch.no_grad():
        q = codec.encode(torch.as_tensor(wav))
    codes = pack_codes(q, config.codec.quantizer)
    Path(args.out).write_bytes(serialize_codes(codes, config.codec.quantizer))
    rate = bitrate_bps(config.codec.quantizer, config.codec.frame_rate)
    print(f"{codes.shape[0]} frames -> {args.out} ({rate / 1000:g} kbps)")
    return 0


def cmd_decode(args):
    from .pipeline import load_codec

    codec, config = load_codec(args.checkpoint)
    codes, qconfig = deserialize_codes(Path(args.input).read_bytes())
    if qconfig != config.codec.quantizer:
        raise SystemExit(f"code stream has S={qconfig.S}, d={qconfig.d}; codec expects "
                         f"S={config.codec.S}, d={config.codec.d}")
    with torch.no_grad():
        wav = codec.decode(torch.as_tensor(unpack_codes(codes, qconfig)))
    write_wav(args.out, wav.numpy(), config.codec.sample_rate)
    print(f"{len(wav)} samples -> {args.out}")
    return 0


def cmd_synthesize(args):
    from .pipeline import load_tts, synthesize

    if not args.reference or not Path(args.reference).exists():
        raise SystemExit("synthesize needs an existing --reference WAV for the speaker embedding")
    expected = RunConfig.load(args.config) if args.config else None
    model, codec, _ = load_tts(args.checkpoint, expected)
    client = None
    if args.llm_endpoint:
        client = LLMClient(args.llm_endpoint, cache_path=args.llm_cache)
    wav = synthesize(args.text, args.reference, model, codec, seed=args.seed or 0, duration=args.duration,
                     llm_client=client, num_inference_steps=args.steps, out_path=args.out)
    print(f"{len(wav)} samples -> {args.out}")
    return 0


def cmd_eval(args):
    rows = evaluate_dirs(args.ref_dir, args.cand_dir, args.out, args.bitrate)
    print(json.dumps(rows[-1], indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sqtts", description="Scalar-quantized speech codec and latent diffusion TTS")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="RunConfig JSON file")
        sp.add_argument("--preset", choices=["toy", "default"], default="default")
        if seed:
            sp.add_argument("--seed", type=int)
        sp.add_argument("--device", choices=["cpu"], default="cpu")

    sp = sub.add_parser("init-config", help="write a RunConfig JSON")
    sp.add_argument("--preset", choices=["toy", "default"], default="default")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_init_config)

    sp = sub.add_parser("ingest", help="build a manifest from WAVs with sidecar .txt transcripts")
    sp.add_argument("audio_dir")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("train-codec")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--resume")
    sp.add_argument("--log", help="loss CSV path")
    sp.set_defaults(func=cmd_train_codec)

    sp = sub.add_parser("train-tts")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--codec", help="trained codec checkpoint")
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--resume")
    sp.add_argument("--log")
    sp.set_defaults(func=cmd_train_tts)

    sp = sub.add_parser("encode", help="WAV -> SQC1 code stream")
    sp.add_argument("input")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="SQC1 code stream -> WAV")
    sp.add_argument("input")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("synthesize")
    sp.add_argument("--text", required=True)
    sp.add_argument("--reference")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--config", help="fail unless the checkpoint was trained with this config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--steps", type=int, help="diffusion steps (default from config, 100)")
    sp.add_argument("--duration", type=float, help="override the sentence duration in seconds")
    sp.add_argument("--llm-endpoint", help="chat-completions URL for duration estimates")
    sp.add_argument("--llm-cache", default=".sqtts_llm_cache.json")
    sp.add_argument("--device", choices=["cpu"], default="cpu")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("eval", help="score paired WAVs in two directories")
    sp.add_argument("ref_dir")
    sp.add_argument("cand_dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--bitrate", type=float)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
