"""Word error rate and descriptive statistics for code-switched manifests."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import iter_jsonl
from .errors import EmptyInput, EmptyReference, MalformedLine


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_words: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_words if self.ref_words else 0.0

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_words + other.ref_words,
        )

    def to_json(self) -> dict:
        return {
            "wer": self.wer,
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "ref_words": self.ref_words,
        }


def normalize_words(text: str, normalize: bool = False) -> list[str]:
    """NFC then whitespace split; ``normalize`` also lowercases and drops punctuation."""
    text = unicodedata.normalize("NFC", text)
    if normalize:
        text = "".join(" " if unicodedata.category(c).startswith("P") else c for c in text.lower())
    return text.split()


def align(ref: Sequence[str], hyp: Sequence[str]) -> WerBreakdown:
    """Minimum edit alignment with unit costs.

    Among equal-cost alignments the one with the fewest insertions plus
    deletions wins, i.e. a substitution is preferred over an insert+delete
    pair. Since deletions minus insertions is fixed by the lengths, this
    pins down S, D and I uniquely.
    """
    n, m = len(ref), len(hyp)
    # best[i][j] = (edits, indels) turning ref[:i] into hyp[:j]
    prev = [(j, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        row = [(i, i)]
        r = ref[i - 1]
        for j in range(1, m + 1):
            c, k = prev[j - 1]
            sub = (c + (r != hyp[j - 1]), k)
            c, k = prev[j]
            dele = (c + 1, k + 1)
            c, k = row[j - 1]
            ins = (c + 1, k + 1)
            row.append(min(sub, dele, ins))
        prev = row
    edits, indels = prev[m]
    d = (indels + n - m) // 2
    ins = indels - d
    return WerBreakdown(edits - indels, ins, d, n)


def wer(reference: str, hypothesis: str, normalize: bool = False) -> WerBreakdown:
    ref = normalize_words(reference, normalize)
    hyp = normalize_words(hypothesis, normalize)
    if not ref and hyp:
        raise EmptyReference("WER is undefined for an empty reference and a non-empty hypothesis")
    return align(ref, hyp)


def corpus_wer(pairs: Iterable[tuple[str, str]], normalize: bool = False) -> WerBreakdown:
    """Micro-averaged WER: edits and reference words pooled over all pairs."""
    total = None
    for ref, hyp in pairs:
        b = wer(ref, hyp, normalize)
        total = b if total is None else total + b
    if total is None:
        raise EmptyInput("corpus_wer needs at least one pair")
    return total


def cs_corpus_stats(rows) -> dict:
    """Summarize a generated manifest (a path or an iterable of row dicts).

    Unique characters are counted over transcript text, whitespace excluded.
    A switch is a language change between adjacent segments.
    """
    if isinstance(rows, (str, bytes)) or hasattr(rows, "__fspath__"):
        rows = iter_jsonl(rows)
    else:
        rows = enumerate(rows, 1)
    count = 0
    seconds = 0.0
    chars: set[str] = set()
    switches: Counter = Counter()
    lang_seconds: Counter = Counter()
    for line_no, row in rows:
        if not isinstance(row, dict):
            raise MalformedLine(line_no, "not a JSON object")
        segs = row.get("segments")
        if not isinstance(segs, list) or not segs:
            raise MalformedLine(line_no, "missing segments")
        try:
            seconds += float(row["duration"])
            langs = [s["lang"] for s in segs]
            for s in segs:
                lang_seconds[s["lang"]] += float(s["duration"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedLine(line_no, f"bad row: {e}") from None
        text = row.get("text") or " ".join(s.get("text", "") for s in segs)
        chars.update(c for c in text if not c.isspace())
        switches[sum(a != b for a, b in zip(langs, langs[1:]))] += 1
        count += 1
    speech = sum(lang_seconds.values()) or 1.0
    return {
        "utterances": count,
        "total_seconds": seconds,
        "total_hours": seconds / 3600.0,
        "unique_characters": len(chars),
        "switches_histogram": {str(k): switches[k] for k in sorted(switches)},
        "language_duration_share": {l: lang_seconds[l] / speech for l in sorted(lang_seconds)},
    }
