"""Synthetic code-switched corpus generation from monolingual pools.

Generation runs in two stages. Planning is pure and cheap: it picks
utterances and pauses for one sample from a per-sample RNG. Rendering reads
the chosen audio, brings every segment to the same RMS level, and stitches
the segments with digital silence between them.

Samples are planned in index order and rendered in parallel; the manifest is
written in index order, so output bytes do not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    DURATION_TOLERANCE,
    SAMPLE_RATE,
    UtteranceRecord,
    Waveform,
    filter_pool,
    read_wav,
    write_wav,
)
from .errors import DurationMismatch, EmptyPool, GenerationStuck, IoError, ValidationError
from .tokenizer import Segment, TaggedText

log = logging.getLogger(__name__)

SWITCH_POLICIES = ("alternate", "uniform", "free")
PEAK_LIMIT = 0.99
MANIFEST_NAME = "manifest.jsonl"
STATS_NAME = "stats.json"
_EPS = 1e-9


@dataclass(frozen=True)
class GenConfig:
    min_gen_sample_duration: float = 17.0
    max_gen_sample_duration: float = 19.0
    target_total: float = 1.0
    num_samples: int | None = None
    switch_policy: str = "alternate"
    pause_range: tuple[float, float] = (0.0, 0.5)
    target_rms_dbfs: float = -20.0
    min_seg_dur: float = 1.0
    seed: int = 0
    max_resample_attempts: int = 5
    sample_rate: int = SAMPLE_RATE
    reuse_across_samples: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pause_range", tuple(float(x) for x in self.pause_range))
        if not 0 < self.min_gen_sample_duration < self.max_gen_sample_duration:
            raise ValidationError(
                "need 0 < min_gen_sample_duration < max_gen_sample_duration, got "
                f"{self.min_gen_sample_duration} and {self.max_gen_sample_duration}"
            )
        if len(self.pause_range) != 2 or not 0 <= self.pause_range[0] <= self.pause_range[1]:
            raise ValidationError(f"pause_range must be [lo, hi] with 0 <= lo <= hi, got {self.pause_range}")
        if self.max_resample_attempts < 1:
            raise ValidationError("max_resample_attempts must be >= 1")
        if self.switch_policy not in SWITCH_POLICIES:
            raise ValidationError(f"switch_policy must be one of {SWITCH_POLICIES}")
        if self.num_samples is None and not self.target_total > 0:
            raise ValidationError("target_total must be positive")
        if self.num_samples is not None and self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        if self.min_seg_dur <= 0:
            raise ValidationError("min_seg_dur must be positive")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")

    @property
    def target_rms(self) -> float:
        return 10.0 ** (self.target_rms_dbfs / 20.0)


@dataclass(frozen=True)
class PlannedSegment:
    lang: str
    record: UtteranceRecord
    pause_after: float


@dataclass(frozen=True)
class SamplePlan:
    segments: tuple[PlannedSegment, ...]
    planned_duration: float
    replans: int = 0

    @property
    def languages(self) -> list[str]:
        return [s.lang for s in self.segments]

    @property
    def switches(self) -> int:
        langs = self.languages
        return sum(a != b for a, b in zip(langs, langs[1:]))


@dataclass(frozen=True)
class SegmentInfo:
    lang: str
    text: str
    source: str
    offset: float
    duration: float
    start_sample: int
    num_samples: int
    peak_limited: bool = False
    silent: bool = False

    def to_json(self) -> dict:
        return {
            "lang": self.lang,
            "text": self.text,
            "offset": self.offset,
            "duration": self.duration,
            "source": self.source,
            "peak_limited": self.peak_limited,
        }


@dataclass(eq=False)
class CsSample:
    audio: Waveform
    tagged_transcript: TaggedText
    segment_metadata: list[SegmentInfo] = field(default_factory=list)


@dataclass(frozen=True)
class Normalized:
    waveform: Waveform
    gain: float
    peak_limited: bool = False
    silent: bool = False


# ---------------------------------------------------------------- planning


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for one sample, derived from (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]))


def _draw(n: int, blocked_a: set, blocked_b: set, rng: np.random.Generator) -> int | None:
    blocked = len(blocked_a) + len(blocked_b)
    if blocked >= n:
        return None
    if 2 * blocked <= n:
        while True:
            i = int(rng.integers(n))
            if i not in blocked_a and i not in blocked_b:
                return i
    candidates = [i for i in range(n) if i not in blocked_a and i not in blocked_b]
    if not candidates:
        return None
    return candidates[int(rng.integers(len(candidates)))]


def _next_language(langs: list[str], current: str, policy: str, rng: np.random.Generator) -> str:
    if policy == "alternate":
        return langs[(langs.index(current) + 1) % len(langs)]
    if policy == "uniform":
        others = [l for l in langs if l != current]
        return others[int(rng.integers(len(others)))]
    return langs[int(rng.integers(len(langs)))]


def pool_histogram(pools: Mapping[str, Sequence[UtteranceRecord]]) -> dict[str, dict[str, int]]:
    """Per-language counts of utterance durations in whole-second bins."""
    hist = {}
    for lang in sorted(pools):
        c = Counter(int(r.duration) for r in pools[lang])
        hist[lang] = {f"{b}-{b + 1}s": c[b] for b in sorted(c)}
    return hist


def plan_sample(
    pools: Mapping[str, Sequence[UtteranceRecord]],
    cfg: GenConfig,
    rng: np.random.Generator,
    exclude: Mapping[str, set] | None = None,
) -> SamplePlan:
    """Choose the segments of one code-switched sample.

    The first language is uniform over the pools. Each step draws an
    utterance uniformly from the current language (never one already in this
    plan, nor one listed in ``exclude``) and a pause before it; if the sample
    would overrun the maximum duration the draw is retried, and after
    ``max_resample_attempts`` failures the sample is closed. A sample shorter
    than the minimum is discarded and planned afresh.
    """
    langs = sorted(pools)
    for lang in langs:
        if not pools[lang]:
            raise EmptyPool(lang)
    if len(langs) < 2:
        raise ValidationError(f"need at least 2 language pools, got {langs}")
    exclude = exclude or {}
    lo, hi = cfg.pause_range
    sr = cfg.sample_rate
    max_replans = cfg.max_resample_attempts * 100

    for replan in range(max_replans):
        lang = langs[int(rng.integers(len(langs)))]
        used: dict[str, set] = defaultdict(set)
        chosen: list[tuple[str, UtteranceRecord]] = []
        pauses: list[float] = []
        total = 0.0
        while True:
            pool = pools[lang]
            placed = False
            for _ in range(cfg.max_resample_attempts):
                idx = _draw(len(pool), used[lang], exclude.get(lang, set()), rng)
                if idx is None:
                    break
                rec = pool[idx]
                pause = round(float(rng.uniform(lo, hi)) * sr) / sr if chosen else 0.0
                if total + pause + rec.duration <= cfg.max_gen_sample_duration + _EPS:
                    used[lang].add(idx)
                    if chosen:
                        pauses.append(pause)
                    chosen.append((lang, rec))
                    total += pause + rec.duration
                    placed = True
                    break
            if not placed:
                break
            lang = _next_language(langs, lang, cfg.switch_policy, rng)
        if chosen and total >= cfg.min_gen_sample_duration - _EPS:
            pauses.append(0.0)
            segments = tuple(PlannedSegment(l, r, p) for (l, r), p in zip(chosen, pauses))
            duration = sum(s.record.duration + s.pause_after for s in segments)
            return SamplePlan(segments, duration, replan)

    raise GenerationStuck(
        f"no sample within [{cfg.min_gen_sample_duration}, {cfg.max_gen_sample_duration}] s "
        f"after {max_replans} attempts",
        {"pool_duration_histogram": pool_histogram(pools)},
    )


# ---------------------------------------------------------------- rendering


def normalize_segment(w: Waveform, target_rms_dbfs: float = -20.0) -> Normalized:
    """Scale ``w`` to the target RMS level, backing off to keep peaks at 0.99."""
    rms = w.rms()
    if rms == 0.0:
        log.warning("silent segment left unnormalized")
        return Normalized(w, 1.0, silent=True)
    gain = 10.0 ** (target_rms_dbfs / 20.0) / rms
    peak = w.peak()
    limited = peak * gain > PEAK_LIMIT
    if limited:
        gain = PEAK_LIMIT / peak
    return Normalized(Waveform(w.samples * gain, w.sample_rate), gain, peak_limited=limited)


def render_sample(plan: SamplePlan, cfg: GenConfig) -> CsSample:
    sr = cfg.sample_rate
    chunks = []
    meta = []
    pos = 0
    for seg in plan.segments:
        src = read_wav(seg.record.audio_filepath, expected_rate=sr)
        if abs(src.duration - seg.record.duration) > DURATION_TOLERANCE:
            raise DurationMismatch(seg.record.audio_filepath, seg.record.duration, src.duration)
        norm = normalize_segment(src, cfg.target_rms_dbfs)
        n = len(norm.waveform)
        chunks.append(norm.waveform.samples)
        meta.append(
            SegmentInfo(
                lang=seg.lang,
                text=seg.record.text,
                source=seg.record.audio_filepath,
                offset=pos / sr,
                duration=n / sr,
                start_sample=pos,
                num_samples=n,
                peak_limited=norm.peak_limited,
                silent=norm.silent,
            )
        )
        pos += n
        gap = int(round(seg.pause_after * sr))
        if gap:
            chunks.append(np.zeros(gap))
            pos += gap
    audio = Waveform(np.concatenate(chunks) if chunks else np.zeros(0), sr)
    transcript = TaggedText(tuple(Segment(m.lang, m.text) for m in meta))
    return CsSample(audio, transcript, meta)


# ---------------------------------------------------------------- corpus


def build_pools(
    records: Sequence[UtteranceRecord], cfg: GenConfig
) -> tuple[dict[str, list[UtteranceRecord]], Counter]:
    """Group records by language and drop those unusable as segments."""
    by_lang: dict[str, list[UtteranceRecord]] = defaultdict(list)
    for rec in records:
        by_lang[rec.lang].append(rec)
    pools = {}
    dropped: Counter = Counter()
    for lang in sorted(by_lang):
        kept, d = filter_pool(by_lang[lang], cfg.min_seg_dur, cfg.max_gen_sample_duration, cfg.sample_rate)
        pools[lang] = kept
        dropped.update(d)
    return pools, dropped


def iter_plans(pools: Mapping[str, Sequence[UtteranceRecord]], cfg: GenConfig):
    """Yield (index, plan) until the configured corpus size is reached."""
    exclude: dict[str, set] | None = None
    if not cfg.reuse_across_samples:
        exclude = defaultdict(set)
        positions = {lang: {id(r): i for i, r in enumerate(pool)} for lang, pool in pools.items()}
    target = cfg.target_total * 3600.0
    total = 0.0
    index = 0
    while True:
        if cfg.num_samples is not None:
            if index >= cfg.num_samples:
                return
        elif total >= target:
            return
        plan = plan_sample(pools, cfg, sample_rng(cfg.seed, index), exclude)
        if exclude is not None:
            for seg in plan.segments:
                exclude[seg.lang].add(positions[seg.lang][id(seg.record)])
        yield index, plan
        total += plan.planned_duration
        index += 1


def _manifest_row(name: str, sample: CsSample) -> dict:
    return {
        "audio_filepath": name,
        "duration": sample.audio.duration,
        "text": sample.tagged_transcript.text,
        "segments": [m.to_json() for m in sample.segment_metadata],
    }


class _Stats:
    def __init__(self):
        self.samples = 0
        self.seconds = 0.0
        self.switches = Counter()
        self.lang_seconds = Counter()
        self.start = Counter()
        self.end = Counter()
        self.segments = 0
        self.peak_limited = 0
        self.silent = 0
        self.replans = 0

    def add(self, plan: SamplePlan, sample: CsSample):
        self.samples += 1
        self.seconds += sample.audio.duration
        self.switches[plan.switches] += 1
        self.start[plan.segments[0].lang] += 1
        self.end[plan.segments[-1].lang] += 1
        self.replans += plan.replans
        for m in sample.segment_metadata:
            self.segments += 1
            self.lang_seconds[m.lang] += m.duration
            self.peak_limited += m.peak_limited
            self.silent += m.silent

    def to_json(self) -> dict:
        speech = sum(self.lang_seconds.values()) or 1.0
        return {
            "samples": self.samples,
            "total_seconds": self.seconds,
            "total_hours": self.seconds / 3600.0,
            "segments": self.segments,
            "switches_histogram": {str(k): self.switches[k] for k in sorted(self.switches)},
            "zero_switch_fraction": self.switches[0] / self.samples if self.samples else 0.0,
            "language_time_share": {l: self.lang_seconds[l] / speech for l in sorted(self.lang_seconds)},
            "start_language_counts": {l: self.start[l] for l in sorted(self.start)},
            "end_language_counts": {l: self.end[l] for l in sorted(self.end)},
            "peak_limited_segments": self.peak_limited,
            "silent_segments": self.silent,
            "replans": self.replans,
        }


def format_stats(stats: dict) -> str:
    lines = [
        f"samples            {stats['samples']}",
        f"total hours        {stats['total_hours']:.4f}",
        f"segments           {stats['segments']}",
        f"zero-switch frac   {stats['zero_switch_fraction']:.3f}",
        f"peak-limited segs  {stats['peak_limited_segments']}",
        "switches/sample    " + ", ".join(f"{k}: {v}" for k, v in stats["switches_histogram"].items()),
    ]
    for lang, share in stats["language_time_share"].items():
        lines.append(
            f"{lang:<6} time share {share:.3f}  starts {stats['start_language_counts'].get(lang, 0)}"
            f"  ends {stats['end_language_counts'].get(lang, 0)}"
        )
    return "\n".join(lines)


def generate_corpus(
    pools: Mapping[str, Sequence[UtteranceRecord]],
    cfg: GenConfig,
    out_dir,
    jobs: int | None = 1,
    chunk_size: int = 64,
) -> dict:
    """Plan, render and write a corpus into ``out_dir``.

    Output is assembled in a sibling temporary directory and renamed into
    place at the end, so an interrupted run leaves nothing at ``out_dir``.
    ``out_dir`` must not exist or must be empty. Returns the summary stats,
    which are also written to ``stats.json``.
    """
    out_dir = os.path.abspath(out_dir)
    if os.path.exists(out_dir) and (not os.path.isdir(out_dir) or os.listdir(out_dir)):
        raise IoError(f"output directory {out_dir} exists and is not empty")
    parent = os.path.dirname(out_dir)
    try:
        os.makedirs(parent, exist_ok=True)
        tmp = tempfile.mkdtemp(prefix=f".{os.path.basename(out_dir)}.", dir=parent)
    except OSError as e:
        raise IoError(f"cannot create output under {parent}: {e}") from e

    jobs = jobs or os.cpu_count() or 1
    stats = _Stats()

    def work(item):
        index, plan = item
        sample = render_sample(plan, cfg)
        name = f"cs_{index:08d}.wav"
        write_wav(os.path.join(tmp, name), sample.audio)
        return plan, name, sample

    try:
        with open(os.path.join(tmp, MANIFEST_NAME), "w", encoding="utf-8", newline="\n") as manifest, ThreadPoolExecutor(
            max_workers=jobs
        ) as pool:
            batch = []
            plans = iter_plans(pools, cfg)
            while True:
                batch = [item for _, item in zip(range(chunk_size), plans)]
                if not batch:
                    break
                for plan, name, sample in pool.map(work, batch):
                    manifest.write(json.dumps(_manifest_row(name, sample), ensure_ascii=False) + "\n")
                    stats.add(plan, sample)
        summary = stats.to_json()
        with open(os.path.join(tmp, STATS_NAME), "w", encoding="utf-8") as f:
            json.dump({"config": _config_json(cfg), **summary}, f, indent=2, sort_keys=True)
            f.write("\n")
        if os.path.isdir(out_dir):
            os.rmdir(out_dir)
        os.rename(tmp, out_dir)
    except OSError as e:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoError(f"corpus generation failed: {e}") from e
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("wrote %d samples (%.3f h) to %s", summary["samples"], summary["total_hours"], out_dir)
    return summary


def _config_json(cfg: GenConfig) -> dict:
    d = asdict(cfg)
    d["pause_range"] = list(cfg.pause_range)
    return d
