"""Aggregate tokenizer: monolingual tokenizers behind disjoint global-ID ranges.

Each language owns the contiguous range ``[offset, offset + vocab_size)``;
offsets are prefix sums in the caller's entry order. A global ID therefore
names both a piece and the language it came from, which is all the LID
module needs.
"""

from __future__ import annotations

import bisect
import json
import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import (
    DuplicateLanguage,
    HashMismatch,
    IdOutOfRange,
    IoError,
    MalformedModel,
    TooFewParts,
    UnknownLanguage,
)
from .tokenizer import MonoTokenizer, Segment, TaggedText, decode_mono, encode_mono, file_sha256, load_model

AGGREGATE_VERSION = 1


class AggregateEntry(NamedTuple):
    language: str
    tokenizer: MonoTokenizer
    offset: int

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size

    @property
    def last_id(self) -> int:
        return self.offset + self.vocab_size - 1


class LabeledToken(NamedTuple):
    global_id: int
    language: str
    local_id: int


@dataclass(frozen=True)
class LabeledTokenSeq:
    tokens: tuple[LabeledToken, ...] = ()

    @property
    def ids(self) -> list[int]:
        return [t.global_id for t in self.tokens]

    @property
    def languages(self) -> list[str]:
        return [t.language for t in self.tokens]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class AggregateTokenizer:
    entries: tuple[AggregateEntry, ...]
    total_vocab: int

    def __post_init__(self):
        by_lang = {e.language: e for e in self.entries}
        object.__setattr__(self, "_by_lang", by_lang)
        object.__setattr__(self, "_offsets", [e.offset for e in self.entries])

    @property
    def languages(self) -> list[str]:
        return [e.language for e in self.entries]

    def entry(self, language: str) -> AggregateEntry:
        try:
            return self._by_lang[language]
        except KeyError:
            raise UnknownLanguage(language) from None

    def ranges(self) -> list[tuple[str, int, int]]:
        """(language, first ID, last ID) for each entry, inclusive."""
        return [(e.language, e.offset, e.last_id) for e in self.entries]

    def to_global(self, language: str, local_id: int) -> int:
        return to_global(self, language, local_id)

    def to_local(self, global_id: int) -> tuple[str, int]:
        return to_local(self, global_id)

    def encode(self, tagged: TaggedText, normalize: bool = True) -> LabeledTokenSeq:
        return encode_tagged(self, tagged, normalize=normalize)

    def decode(self, ids: Sequence[int]) -> tuple[TaggedText, list[str]]:
        return decode_tokens(self, ids)


def build_aggregate(parts: Sequence[tuple[str, MonoTokenizer]]) -> AggregateTokenizer:
    parts = list(parts)
    if len(parts) < 2:
        raise TooFewParts(f"an aggregate needs at least 2 languages, got {len(parts)}")
    entries = []
    seen = set()
    offset = 0
    for language, tok in parts:
        if language in seen:
            raise DuplicateLanguage(f"language {language!r} given twice")
        seen.add(language)
        entries.append(AggregateEntry(language, tok, offset))
        offset += tok.vocab_size
    return AggregateTokenizer(tuple(entries), offset)


def to_global(agg: AggregateTokenizer, language: str, local_id: int) -> int:
    e = agg.entry(language)
    if not 0 <= local_id < e.vocab_size:
        raise IdOutOfRange(local_id, limit=e.vocab_size)
    return e.offset + local_id


def to_local(agg: AggregateTokenizer, global_id: int) -> tuple[str, int]:
    if not 0 <= global_id < agg.total_vocab:
        raise IdOutOfRange(global_id, limit=agg.total_vocab)
    i = bisect.bisect_right(agg._offsets, global_id) - 1
    e = agg.entries[i]
    return e.language, global_id - e.offset


def encode_tagged(agg: AggregateTokenizer, tagged: TaggedText, normalize: bool = True) -> LabeledTokenSeq:
    tokens: list[LabeledToken] = []
    for i, seg in enumerate(tagged.segments):
        if seg.lang not in agg._by_lang:
            raise UnknownLanguage(seg.lang, i)
        e = agg._by_lang[seg.lang]
        for local in encode_mono(e.tokenizer, seg.text, normalize=normalize):
            tokens.append(LabeledToken(e.offset + local, seg.lang, local))
    return LabeledTokenSeq(tuple(tokens))


def decode_tokens(agg: AggregateTokenizer, ids: Sequence[int]) -> tuple[TaggedText, list[str]]:
    """Split global IDs into same-language runs and detokenize each run."""
    langs: list[str] = []
    runs: list[tuple[str, list[int]]] = []
    for pos, gid in enumerate(ids):
        try:
            lang, local = to_local(agg, int(gid))
        except IdOutOfRange:
            raise IdOutOfRange(gid, position=pos, limit=agg.total_vocab) from None
        langs.append(lang)
        if runs and runs[-1][0] == lang:
            runs[-1][1].append(local)
        else:
            runs.append((lang, [local]))
    segments = tuple(
        Segment(lang, decode_mono(agg._by_lang[lang].tokenizer, local_ids)) for lang, local_ids in runs
    )
    return TaggedText(segments), langs


# ---------------------------------------------------------------- persistence


def save_aggregate(agg: AggregateTokenizer, path, model_paths: dict[str, str]) -> None:
    """Write the aggregate file, referencing each model by path and SHA-256.

    Relative model paths are stored relative to the aggregate file's
    directory so the pair can be moved together.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for e in agg.entries:
        if e.language not in model_paths:
            raise UnknownLanguage(e.language)
        model_path = model_paths[e.language]
        stored = os.path.relpath(os.path.abspath(model_path), base)
        entries.append(
            {
                "language": e.language,
                "model_path": stored,
                "model_sha256": file_sha256(model_path),
                "offset": e.offset,
                "vocab_size": e.vocab_size,
            }
        )
    obj = {"entries": entries, "total_vocab": agg.total_vocab, "version": AGGREGATE_VERSION}
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(obj, ensure_ascii=False, indent=2) + "\n")
    except OSError as e:
        raise IoError(f"cannot write aggregate {path}: {e}") from e


def load_aggregate(path, verify: bool = True) -> AggregateTokenizer:
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read aggregate {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedModel(f"invalid JSON: {e}", path) from e
    if not isinstance(obj, dict) or obj.get("version") != AGGREGATE_VERSION:
        raise MalformedModel("not a version 1 aggregate file", path)
    base = os.path.dirname(os.path.abspath(path))
    parts = []
    declared = []
    for item in obj.get("entries", []):
        try:
            language, model_path = item["language"], item["model_path"]
            sha, offset, vocab = item["model_sha256"], item["offset"], item["vocab_size"]
        except (KeyError, TypeError):
            raise MalformedModel("entry missing a required field", path) from None
        full = model_path if os.path.isabs(model_path) else os.path.join(base, model_path)
        if verify:
            actual = file_sha256(full)
            if actual != sha:
                raise HashMismatch(language, model_path, sha, actual)
        tok = load_model(full)
        if tok.language != language:
            raise MalformedModel(f"model {model_path} is for {tok.language!r}, entry says {language!r}", path)
        parts.append((language, tok))
        declared.append((offset, vocab))
    agg = build_aggregate(parts)
    for e, (offset, vocab) in zip(agg.entries, declared):
        if (e.offset, e.vocab_size) != (offset, vocab):
            raise MalformedModel(
                f"{e.language}: declared range offset={offset} size={vocab} "
                f"disagrees with model (offset={e.offset} size={e.vocab_size})",
                path,
            )
    if obj.get("total_vocab") != agg.total_vocab:
        raise MalformedModel("total_vocab disagrees with entries", path)
    return agg
