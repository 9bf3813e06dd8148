"""Utterance-level language identification by token majority."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .aggregate import AggregateTokenizer, to_local
from .errors import EmptyTokenSequence, IdOutOfRange


@dataclass(frozen=True)
class LidResult:
    predicted: str
    counts: dict[str, int] = field(hash=False)
    total_tokens: int

    def to_json(self) -> dict:
        return {"predicted": self.predicted, "counts": dict(self.counts), "total_tokens": self.total_tokens}


@dataclass(frozen=True)
class LidRow:
    language: str
    samples: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.samples if self.samples else 0.0


@dataclass(frozen=True)
class LidReport:
    rows: tuple[LidRow, ...] = ()

    def row(self, language: str) -> LidRow:
        for r in self.rows:
            if r.language == language:
                return r
        raise KeyError(language)

    def to_json(self) -> dict:
        return {
            "rows": [
                {"language": r.language, "samples": r.samples, "correct": r.correct, "accuracy": r.accuracy}
                for r in self.rows
            ]
        }

    def format(self) -> str:
        lines = [f"{'language':<10} {'# of samples':>12} {'LID accuracy':>14}"]
        for r in self.rows:
            acc = f"{100 * r.accuracy:.0f}% ({r.correct}/{r.samples})"
            lines.append(f"{r.language:<10} {r.samples:>12} {acc:>14}")
        return "\n".join(lines)


def utterance_lid(agg: AggregateTokenizer, ids: Sequence[int]) -> LidResult:
    """Predict the language holding the most tokens.

    Ties go to whichever tied language appears first in ``ids``. ``<unk>``
    tokens count for the range they sit in.
    """
    if len(ids) == 0:
        raise EmptyTokenSequence("cannot identify the language of an empty token sequence")
    counts: Counter = Counter()
    first_seen: dict[str, int] = {}
    for pos, gid in enumerate(ids):
        try:
            lang, _ = to_local(agg, int(gid))
        except IdOutOfRange:
            raise IdOutOfRange(gid, position=pos, limit=agg.total_vocab) from None
        counts[lang] += 1
        first_seen.setdefault(lang, pos)
    predicted = min(counts, key=lambda lang: (-counts[lang], first_seen[lang]))
    return LidResult(predicted, dict(counts), len(ids))


def evaluate_lid(pairs: Iterable[tuple[str, LidResult]]) -> LidReport:
    samples: Counter = Counter()
    correct: Counter = Counter()
    for ref, result in pairs:
        samples[ref] += 1
        if result.predicted == ref:
            correct[ref] += 1
    return LidReport(tuple(LidRow(lang, samples[lang], correct[lang]) for lang in sorted(samples)))
