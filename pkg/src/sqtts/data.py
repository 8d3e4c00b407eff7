"""Dataset manifests: one JSON record per line binding audio, transcript and duration."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .audio import AudioFormatError, read_wav
from .duration import DEFAULT_MAX_SECONDS, duration_from_waveform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Record:
    audio_path: str
    text: str
    duration_seconds: float


@dataclass
class Manifest:
    records: list[Record] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(asdict(rec)) + "\n")

    @classmethod
    def read(cls, path, max_seconds: float = DEFAULT_MAX_SECONDS, check_paths: bool = True) -> "Manifest":
        records = []
        base = Path(path).parent
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                raw = json.loads(line)
                try:
                    rec = Record(str(raw["audio_path"]), str(raw["text"]), float(raw["duration_seconds"]))
                except KeyError as exc:
                    raise ValueError(f"{path}:{lineno}: missing field {exc}") from None
                if not rec.text.strip():
                    raise ValueError(f"{path}:{lineno}: empty transcript")
                if not 0 < rec.duration_seconds <= max_seconds:
                    raise ValueError(f"{path}:{lineno}: duration {rec.duration_seconds} outside (0, {max_seconds}]")
                audio = Path(rec.audio_path)
                if not audio.is_absolute():
                    audio = base / audio
                    rec = Record(str(audio), rec.text, rec.duration_seconds)
                if check_paths and not audio.exists():
                    raise FileNotFoundError(f"{path}:{lineno}: {audio} does not exist")
                records.append(rec)
        return cls(records)


def sidecar_transcript(wav_path: Path) -> str:
    txt = wav_path.with_suffix(".txt")
    if not txt.exists():
        raise FileNotFoundError(f"no transcript {txt.name}")
    text = txt.read_text(encoding="utf-8").strip()
    if not text:
        raise ValueError(f"empty transcript {txt.name}")
    return text


def ingest(audio_dir, transcript_source: Callable[[Path], str] = sidecar_transcript,
           sample_rate: int = 16000, max_seconds: float = DEFAULT_MAX_SECONDS) -> Manifest:
    """Build a manifest from every ``*.wav`` under ``audio_dir``.

    ``transcript_source`` maps a WAV path to its text; the default reads a
    same-named ``.txt`` file. An ASR backend can be passed instead. Files that
    cannot be read or transcribed are skipped with a warning.
    """
    manifest = Manifest()
    for wav_path in sorted(Path(audio_dir).glob("*.wav")):
        try:
            wav, _ = read_wav(wav_path, expected_rate=sample_rate)
            seconds = duration_from_waveform(wav, sample_rate, max_seconds).seconds
            text = transcript_source(wav_path)
        except (AudioFormatError, ValueError, FileNotFoundError) as exc:
            log.warning("skipping %s: %s", wav_path.name, exc)
            manifest.skipped.append((str(wav_path), str(exc)))
            continue
        manifest.records.append(Record(str(wav_path.resolve()), text, seconds))
    return manifest


def load_audio(records, sample_rate: int = 16000):
    return [read_wav(r.audio_path, expected_rate=sample_rate)[0] for r in records]
