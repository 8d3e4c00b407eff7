"""Sentence-level duration: measured at training time, estimated at inference."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import statistics
import urllib.request
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

DEFAULT_WORDS_PER_SECOND = 2.5
DEFAULT_MAX_SECONDS = 30.0
MIN_SECONDS = 0.5

# Our own wording; the original prompt was not published alongside the method.
DEFAULT_PROMPT = (
    "You are timing a voice-over. Estimate how many seconds an average English speaker "
    "needs to read the following sentence aloud at a natural pace. Reply with a single "
    "number of seconds and nothing else.\n\nSentence: {text}"
)


@dataclass(frozen=True)
class DurationEstimate:
    seconds: float
    source: str  # "waveform", "heuristic" or "llm"
    note: str | None = None

    def num_frames(self, frame_rate: float) -> int:
        return max(1, int(round(self.seconds * frame_rate)))


def duration_from_waveform(wav, sample_rate: int = 16000, max_seconds: float = DEFAULT_MAX_SECONDS) -> DurationEstimate:
    n = len(wav)
    if n == 0:
        raise ValueError("empty waveform has no duration")
    seconds = n / sample_rate
    if seconds > max_seconds:
        raise ValueError(f"waveform lasts {seconds:.2f} s, above the {max_seconds} s limit")
    return DurationEstimate(seconds, "waveform")


def count_words(text: str) -> int:
    return len(text.split())


def estimate_duration_heuristic(text: str, words_per_second: float = DEFAULT_WORDS_PER_SECOND,
                                max_seconds: float = DEFAULT_MAX_SECONDS, min_seconds: float = MIN_SECONDS) -> DurationEstimate:
    words = count_words(text)
    if words == 0:
        raise ValueError("cannot estimate the duration of empty text")
    if not words_per_second > 0:
        raise ValueError(f"words_per_second must be positive, got {words_per_second}")
    seconds = min(max(words / words_per_second, min_seconds), max_seconds)
    return DurationEstimate(seconds, "heuristic")


def fit_words_per_second(records) -> float:
    """Median speaking rate over manifest records (``text`` / ``duration_seconds``)."""
    rates = [count_words(r.text) / r.duration_seconds for r in records if r.duration_seconds > 0]
    rates = [r for r in rates if r > 0]
    if not rates:
        raise ValueError("no usable records to fit a speaking rate")
    return statistics.median(rates)


_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")


def parse_seconds(reply: str) -> float:
    match = _NUMBER.search(reply or "")
    if match is None:
        raise ValueError(f"no number in reply {reply!r}")
    return float(match.group())


class LLMClient:
    """Minimal chat-completions client with an on-disk reply cache.

    The cache is keyed by (prompt, text) so reruns are deterministic and do
    not hit the network.
    """

    def __init__(self, endpoint: str, model: str = "gpt-3.5-turbo", token_env: str = "SQTTS_LLM_TOKEN",
                 timeout: float = 10.0, cache_path=None, prompt: str = DEFAULT_PROMPT):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.timeout = timeout
        self.prompt = prompt
        self.cache_path = Path(cache_path) if cache_path else None
        self._cache = {}
        if self.cache_path and self.cache_path.exists():
            self._cache = json.loads(self.cache_path.read_text())

    def _key(self, text: str) -> str:
        return hashlib.sha256(json.dumps([self.prompt, text]).encode()).hexdigest()

    def _request(self, content: str) -> str:
        body = json.dumps({"model": self.model, "messages": [{"role": "user", "content": content}],
                           "temperature": 0}).encode()
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers)
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.load(resp)
        return payload["choices"][0]["message"]["content"]

    def complete(self, text: str) -> str:
        key = self._key(text)
        if key not in self._cache:
            self._cache[key] = self._request(self.prompt.format(text=text))
            if self.cache_path:
                self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                self.cache_path.write_text(json.dumps(self._cache, indent=1, sort_keys=True))
        return self._cache[key]


def estimate_duration_llm(text: str, client, words_per_second: float = DEFAULT_WORDS_PER_SECOND,
                          max_seconds: float = DEFAULT_MAX_SECONDS) -> DurationEstimate:
    """Ask ``client.complete(text)`` for a duration; fall back to the heuristic on any failure."""
    if not text.strip():
        raise ValueError("cannot estimate the duration of empty text")
    try:
        seconds = parse_seconds(client.complete(text))
        if not 0 < seconds <= max_seconds:
            raise ValueError(f"duration {seconds} s outside (0, {max_seconds}]")
        return DurationEstimate(seconds, "llm")
    except Exception as exc:
        log.warning("LLM duration estimate failed (%s); using heuristic", exc)
        est = estimate_duration_heuristic(text, words_per_second, max_seconds)
        return DurationEstimate(est.seconds, est.source, note=f"llm fallback: {exc}")
