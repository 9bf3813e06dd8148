"""JSONL manifests and 16-bit PCM WAV I/O."""

from __future__ import annotations

import json
import logging
import math
import os
import wave
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import IoError, MalformedLine, MissingField, UnsupportedFormat

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
DURATION_TOLERANCE = 0.05
REQUIRED_FIELDS = ("audio_filepath", "duration", "text", "lang")


@dataclass
class UtteranceRecord:
    audio_filepath: str
    duration: float
    text: str
    lang: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        obj = {"audio_filepath": self.audio_filepath, "duration": self.duration, "text": self.text, "lang": self.lang}
        obj.update(self.extra)
        return obj


@dataclass(eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform has non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def rms(self) -> float:
        if not self.samples.size:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


# ---------------------------------------------------------------- manifests


def parse_record(obj, line_no: int) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise MalformedLine(line_no, "not a JSON object")
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise MissingField(line_no, name)
    path, duration, text, lang = (obj[k] for k in REQUIRED_FIELDS)
    if not isinstance(path, str) or not path:
        raise MalformedLine(line_no, "audio_filepath must be a non-empty string")
    if isinstance(duration, bool) or not isinstance(duration, (int, float)) or not math.isfinite(duration):
        raise MalformedLine(line_no, "duration must be a number")
    if duration <= 0:
        raise MalformedLine(line_no, "nonpositive duration")
    if not isinstance(text, str) or not text.strip():
        raise MalformedLine(line_no, "empty text")
    if not isinstance(lang, str) or not lang:
        raise MalformedLine(line_no, "empty lang")
    extra = {k: v for k, v in obj.items() if k not in REQUIRED_FIELDS}
    return UtteranceRecord(path, float(duration), text, lang, extra)


def iter_jsonl(path):
    """Yield (line number, parsed object) for every non-blank line."""
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    with f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLine(line_no, f"invalid JSON: {e.msg}") from None


def load_manifest(path, resolve_paths: bool = True) -> list[UtteranceRecord]:
    """Read and validate a JSONL manifest.

    With ``resolve_paths``, relative audio paths are made relative to the
    manifest's directory rather than the working directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for line_no, obj in iter_jsonl(path):
        rec = parse_record(obj, line_no)
        if resolve_paths and not os.path.isabs(rec.audio_filepath):
            rec.audio_filepath = os.path.normpath(os.path.join(base, rec.audio_filepath))
        records.append(rec)
    return records


def write_manifest(path, records: Iterable) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for rec in records:
                obj = rec.to_json() if hasattr(rec, "to_json") else rec
                f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    except OSError as e:
        raise IoError(f"cannot write manifest {path}: {e}") from e


# ---------------------------------------------------------------- audio


def _open_wav(path):
    try:
        return wave.open(os.fspath(path), "rb")
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except (wave.Error, EOFError) as e:
        raise UnsupportedFormat(f"codec: {e}", path) from e


def probe_wav(path) -> tuple[int, int, int, int]:
    """(channels, bits per sample, sample rate, frame count) from the header."""
    with _open_wav(path) as w:
        return w.getnchannels(), 8 * w.getsampwidth(), w.getframerate(), w.getnframes()


def read_wav(path, expected_rate: int | None = None) -> Waveform:
    with _open_wav(path) as w:
        channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
        if channels != 1:
            raise UnsupportedFormat(f"channels={channels}", path)
        if width != 2:
            raise UnsupportedFormat(f"bit-depth={8 * width}", path)
        if expected_rate is not None and rate != expected_rate:
            raise UnsupportedFormat(f"sample_rate={rate}, expected {expected_rate}", path)
        raw = w.readframes(w.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize to int16 with round-half-away-from-zero and clamping."""
    x = np.asarray(samples, dtype=np.float64) * 32768.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path, wf: Waveform) -> None:
    pcm = to_pcm16(wf.samples)
    try:
        with wave.open(os.fspath(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(wf.sample_rate)
            w.writeframes(pcm.tobytes())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------- pools


def filter_pool(
    records: Iterable[UtteranceRecord],
    min_seg_dur: float,
    max_seg_dur: float,
    sample_rate: int = SAMPLE_RATE,
) -> tuple[list[UtteranceRecord], Counter]:
    """Keep records usable as generation segments.

    Returns the kept records and a counter of drop reasons. A record is
    dropped for being outside ``[min_seg_dur, max_seg_dur]`` or for audio
    that is missing, not mono PCM16, at another sample rate, or whose length
    disagrees with the manifest by more than 50 ms.
    """
    if min_seg_dur > max_seg_dur:
        raise ValueError(f"min_seg_dur {min_seg_dur} > max_seg_dur {max_seg_dur}")
    kept = []
    dropped: Counter = Counter()
    for rec in records:
        if rec.duration < min_seg_dur:
            dropped["below min segment duration"] += 1
            continue
        if rec.duration > max_seg_dur:
            dropped["exceeds max generated sample duration"] += 1
            continue
        try:
            channels, bits, rate, frames = probe_wav(rec.audio_filepath)
        except (IoError, UnsupportedFormat):
            dropped["unreadable audio"] += 1
            continue
        if channels != 1 or bits != 16:
            dropped["unsupported format"] += 1
            continue
        if rate != sample_rate:
            dropped["sample rate mismatch"] += 1
            continue
        if abs(frames / rate - rec.duration) > DURATION_TOLERANCE:
            dropped["duration mismatch"] += 1
            continue
        kept.append(rec)
    for reason, n in sorted(dropped.items()):
        log.info("dropped %d records: %s", n, reason)
    return kept, dropped
