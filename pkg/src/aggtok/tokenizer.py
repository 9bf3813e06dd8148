"""Monolingual subword tokenizers.

Two model kinds share one inventory type:

* ``bpe``: pieces plus an ordered list of merge rules, learned by
  :func:`train_bpe` and applied by rank at encode time.
* ``scored``: pieces plus log-probabilities, typically loaded from an
  externally trained unigram vocabulary and applied with exact Viterbi
  segmentation.

Words are split on whitespace and the first piece of every word carries the
boundary marker ``▁`` (U+2581), so decoding is lossless for covered text.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import unicodedata
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .errors import EmptyCorpus, IdOutOfRange, IoError, MalformedModel, VocabTooSmall

MARKER = "▁"
UNK = "<unk>"
UNK_ID = 0
DEFAULT_VOCAB_SIZE = 1024
MODEL_VERSION = 1
KINDS = ("bpe", "scored")

_SCORE_EPS = 1e-9


class VocabShortfallWarning(UserWarning):
    """Training stopped before reaching the requested vocabulary size."""


def normalize_text(text: str, normalize: bool = True) -> str:
    if not normalize:
        return text
    return unicodedata.normalize("NFC", text).lower()


class Segment(NamedTuple):
    lang: str
    text: str


@dataclass(frozen=True)
class TaggedText:
    """A transcript as an ordered list of (language, text) spans."""

    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        segs = tuple(Segment(*s) for s in self.segments)
        for i, seg in enumerate(segs):
            if not seg.lang:
                raise ValueError(f"segment {i} has an empty language")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def of(cls, *pairs) -> "TaggedText":
        return cls(tuple(pairs))

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.segments if s.text)

    @property
    def languages(self) -> list[str]:
        return [s.lang for s in self.segments]

    def merged(self) -> "TaggedText":
        """Join adjacent same-language segments with a single space."""
        out: list[Segment] = []
        for seg in self.segments:
            if out and out[-1].lang == seg.lang:
                prev = out[-1]
                joined = " ".join(t for t in (prev.text, seg.text) if t)
                out[-1] = Segment(prev.lang, joined)
            else:
                out.append(seg)
        return TaggedText(tuple(out))

    def to_json(self) -> list[dict]:
        return [{"lang": s.lang, "text": s.text} for s in self.segments]

    @classmethod
    def from_json(cls, obj) -> "TaggedText":
        segs = []
        for item in obj:
            if isinstance(item, dict):
                segs.append(Segment(item["lang"], item["text"]))
            else:
                lang, text = item
                segs.append(Segment(lang, text))
        return cls(tuple(segs))


@dataclass(frozen=True)
class MonoTokenizer:
    language: str
    kind: str
    pieces: tuple[str, ...]
    scores: tuple[float, ...] | None = None
    merges: tuple[tuple[str, str], ...] | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _ranks: dict = field(default=None, init=False, repr=False, compare=False)
    _max_len: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if self.merges is not None:
            object.__setattr__(self, "merges", tuple((l, r) for l, r in self.merges))
        _validate(self)
        index = {p: i for i, p in enumerate(self.pieces)}
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_max_len", max(len(p) for p in self.pieces[1:]) if len(self.pieces) > 1 else 0)
        if self.merges is not None:
            ranks = {}
            for rank, pair in enumerate(self.merges):
                ranks.setdefault(pair, rank)
            object.__setattr__(self, "_ranks", ranks)

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def vocab_size(self) -> int:
        return len(self.pieces)

    def piece_to_id(self, piece: str) -> int:
        return self._index.get(piece, UNK_ID)

    def id_to_piece(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.pieces):
            raise IdOutOfRange(token_id, limit=len(self.pieces))
        return self.pieces[token_id]

    def encode(self, text: str, normalize: bool = True) -> list[int]:
        return encode_mono(self, text, normalize=normalize)

    def decode(self, ids: Sequence[int]) -> str:
        return decode_mono(self, ids)


def _validate(tok: MonoTokenizer) -> None:
    if not isinstance(tok.language, str) or not tok.language:
        raise MalformedModel("empty language")
    if tok.kind not in KINDS:
        raise MalformedModel(f"unknown kind {tok.kind!r}")
    pieces = tok.pieces
    if not pieces or pieces[0] != UNK:
        raise MalformedModel("piece 0 must be <unk>")
    seen = set()
    for p in pieces:
        if not isinstance(p, str):
            raise MalformedModel("non-string piece")
        if p in seen:
            raise MalformedModel(f"duplicate piece {p!r}")
        seen.add(p)
        if p != UNK and (not p or any(c.isspace() for c in p)):
            raise MalformedModel(f"empty or whitespace-bearing piece {p!r}")
    if tok.kind == "scored":
        if tok.scores is None:
            raise MalformedModel("scored model without scores")
        if len(tok.scores) != len(pieces):
            raise MalformedModel(
                f"scores length {len(tok.scores)} != pieces length {len(pieces)}"
            )
        if not all(math.isfinite(s) for s in tok.scores):
            raise MalformedModel("non-finite score")
        if tok.merges is not None:
            raise MalformedModel("scored model with merges")
    else:
        if tok.merges is None:
            raise MalformedModel("bpe model without merges")
        if tok.scores is not None:
            raise MalformedModel("bpe model with scores")
        for left, right in tok.merges:
            if left + right not in seen:
                raise MalformedModel(f"merge output {left + right!r} not in pieces")


# ---------------------------------------------------------------- training


def _word_symbols(word: str) -> list[str]:
    return [MARKER + word[0], *word[1:]]


def _pairs(symbols: Sequence[str]) -> Counter:
    return Counter(zip(symbols, symbols[1:]))


def train_bpe(
    corpus: Iterable[str],
    vocab_size: int = DEFAULT_VOCAB_SIZE,
    language: str = "en",
    normalize: bool = True,
) -> MonoTokenizer:
    """Learn a BPE inventory of at most ``vocab_size`` pieces.

    Pieces are ``<unk>``, then every base symbol seen (sorted, word-initial
    characters carrying the marker), then merge outputs in the order learned.
    Each step merges the most frequent adjacent pair; equal counts go to the
    lexicographically smallest pair. Training stops at ``vocab_size`` or when
    no pair occurs at least twice, in which case a
    :class:`VocabShortfallWarning` is issued.
    """
    lines = list(corpus)
    if not lines:
        raise EmptyCorpus("corpus has no lines")
    word_freq: Counter = Counter()
    for line in lines:
        word_freq.update(normalize_text(line, normalize).split())
    if not word_freq:
        raise EmptyCorpus("corpus has no words")

    words = [_word_symbols(w) for w in sorted(word_freq)]
    freqs = [word_freq[w] for w in sorted(word_freq)]
    base = sorted({s for syms in words for s in syms})
    if vocab_size < len(base) + 1:
        raise VocabTooSmall(
            f"vocab_size {vocab_size} < {len(base) + 1} (<unk> plus {len(base)} base symbols)"
        )

    pieces = [UNK, *base]
    piece_set = set(pieces)
    merges: list[tuple[str, str]] = []

    counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for idx, syms in enumerate(words):
        for pair, n in _pairs(syms).items():
            counts[pair] += n * freqs[idx]
            where.setdefault(pair, set()).add(idx)
    heap = [(-n, pair) for pair, n in counts.items()]
    heapq.heapify(heap)

    while len(pieces) < vocab_size:
        best = None
        while heap:
            neg, pair = heapq.heappop(heap)
            if counts.get(pair, 0) == -neg:
                best = pair
                break
        if best is None or counts[best] < 2:
            break
        left, right = best
        merged = left + right
        merges.append(best)
        if merged not in piece_set:
            pieces.append(merged)
            piece_set.add(merged)

        touched: set[tuple[str, str]] = set()
        for idx in where.pop(best, ()):
            syms = words[idx]
            old = _pairs(syms)
            new_syms = _merge_pair(syms, left, right)
            new = _pairs(new_syms)
            words[idx] = new_syms
            for pair, n in old.items():
                counts[pair] -= n * freqs[idx]
                touched.add(pair)
                if pair != best and pair not in new:
                    where[pair].discard(idx)
            for pair, n in new.items():
                counts[pair] += n * freqs[idx]
                touched.add(pair)
                where.setdefault(pair, set()).add(idx)
        counts.pop(best, None)
        for pair in touched:
            n = counts.get(pair, 0)
            if n <= 0:
                counts.pop(pair, None)
            elif pair != best:
                heapq.heappush(heap, (-n, pair))

    if len(pieces) < vocab_size:
        warnings.warn(
            f"{language}: stopped at {len(pieces)} pieces, no pair occurs twice "
            f"(requested {vocab_size})",
            VocabShortfallWarning,
            stacklevel=2,
        )
    return MonoTokenizer(language=language, kind="bpe", pieces=tuple(pieces), merges=tuple(merges))


def _merge_pair(symbols: Sequence[str], left: str, right: str) -> list[str]:
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


# ---------------------------------------------------------------- encoding


def _collapse_unk(ids: list[int]) -> list[int]:
    out: list[int] = []
    for i in ids:
        if i == UNK_ID and out and out[-1] == UNK_ID:
            continue
        out.append(i)
    return out


def _bpe_word(tok: MonoTokenizer, word: str) -> list[int]:
    symbols = _word_symbols(word)
    ranks = tok._ranks
    while len(symbols) > 1:
        best_rank = None
        best_pair = None
        for pair in zip(symbols, symbols[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank, best_pair = rank, pair
        if best_pair is None:
            break
        symbols = _merge_pair(symbols, *best_pair)
    return _collapse_unk([tok.piece_to_id(s) for s in symbols])


def viterbi_segment(tok: MonoTokenizer, word: str) -> list[int]:
    """Highest-scoring segmentation of a marker-prefixed word.

    Ranking, in order: fewest characters left uncovered (each becomes
    ``<unk>``), highest total score, fewest pieces, then longest leftmost
    piece. Runs of uncovered characters collapse to one ``<unk>``.
    """
    if tok.kind != "scored":
        raise ValueError("viterbi_segment needs a scored tokenizer")
    n = len(word)
    if n == 0:
        return []
    index, scores, max_len = tok._index, tok.scores, tok._max_len
    # best[i] ranks the suffix word[i:]: (unk chars, score, pieces, first piece len)
    best_unk = [0] * (n + 1)
    best_score = [0.0] * (n + 1)
    best_pieces = [0] * (n + 1)
    choice: list[tuple[int, int]] = [(0, 0)] * (n + 1)
    for i in range(n - 1, -1, -1):
        cand = None
        for length in range(min(max_len, n - i), 0, -1):
            pid = index.get(word[i : i + length])
            if pid is None or pid == UNK_ID:
                continue
            j = i + length
            key = (best_unk[j], scores[pid] + best_score[j], best_pieces[j] + 1)
            if cand is None or _better(key, cand[0]):
                cand = (key, pid, length)
        j = i + 1
        unk_key = (best_unk[j] + 1, best_score[j], best_pieces[j] + 1)
        if cand is None or _better(unk_key, cand[0]):
            cand = (unk_key, UNK_ID, 1)
        (best_unk[i], best_score[i], best_pieces[i]), pid, length = cand
        choice[i] = (pid, length)
    ids = []
    i = 0
    while i < n:
        pid, length = choice[i]
        ids.append(pid)
        i += length
    return _collapse_unk(ids)


def _better(a, b) -> bool:
    # candidates arrive longest-first, so an exact tie keeps the longer piece
    if a[0] != b[0]:
        return a[0] < b[0]
    if abs(a[1] - b[1]) > _SCORE_EPS * max(1.0, abs(a[1]), abs(b[1])):
        return a[1] > b[1]
    return a[2] < b[2]


def encode_mono(tok: MonoTokenizer, text: str, normalize: bool = True) -> list[int]:
    ids: list[int] = []
    for word in normalize_text(text, normalize).split():
        if tok.kind == "bpe":
            ids.extend(_bpe_word(tok, word))
        else:
            ids.extend(viterbi_segment(tok, MARKER + word))
    return ids


def decode_mono(tok: MonoTokenizer, ids: Sequence[int]) -> str:
    parts = []
    for i in ids:
        parts.append(tok.id_to_piece(int(i)))
    text = "".join(parts).replace(MARKER, " ")
    if text.startswith(" "):
        text = text[1:]
    return text


# ---------------------------------------------------------------- persistence


def model_to_json(tok: MonoTokenizer) -> str:
    obj: dict = {"language": tok.language, "kind": tok.kind, "pieces": list(tok.pieces)}
    if tok.scores is not None:
        obj["scores"] = list(tok.scores)
    if tok.merges is not None:
        obj["merges"] = [list(m) for m in tok.merges]
    obj["version"] = MODEL_VERSION
    return json.dumps(obj, ensure_ascii=False) + "\n"


def save_model(tok: MonoTokenizer, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(model_to_json(tok))
    except OSError as e:
        raise IoError(f"cannot write model {path}: {e}") from e


def model_from_dict(obj, path=None) -> MonoTokenizer:
    if not isinstance(obj, dict):
        raise MalformedModel("top level is not an object", path)
    if obj.get("version") != MODEL_VERSION:
        raise MalformedModel(f"unsupported version {obj.get('version')!r}", path)
    for key in ("language", "kind", "pieces"):
        if key not in obj:
            raise MalformedModel(f"missing {key!r}", path)
    pieces = obj["pieces"]
    if not isinstance(pieces, list):
        raise MalformedModel("pieces is not a list", path)
    merges = obj.get("merges")
    if merges is not None:
        if not all(isinstance(m, list) and len(m) == 2 and all(isinstance(x, str) for x in m) for m in merges):
            raise MalformedModel("merge rules must be [left, right] string pairs", path)
        merges = tuple(tuple(m) for m in merges)
    scores = obj.get("scores")
    if scores is not None:
        if not isinstance(scores, list) or not all(
            isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores
        ):
            raise MalformedModel("scores must be numbers", path)
    try:
        return MonoTokenizer(
            language=obj["language"],
            kind=obj["kind"],
            pieces=tuple(pieces),
            scores=None if scores is None else tuple(scores),
            merges=merges,
        )
    except MalformedModel as e:
        raise MalformedModel(e.reason, path) from None


def load_model(path) -> MonoTokenizer:
    try:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise IoError(f"cannot read model {path}: {e}") from e
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MalformedModel(f"invalid JSON: {e}", path) from e
    return model_from_dict(obj, path)


def load_scored_vocab(path, language: str) -> MonoTokenizer:
    """Read a tab-separated ``piece<TAB>log-prob`` vocabulary.

    This is the layout SentencePiece writes next to its unigram models. The
    first line must be ``<unk>``; its score is kept but never used.
    """
    pieces, scores = [], []
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                piece, _, score = line.partition("\t")
                try:
                    scores.append(float(score) if score else 0.0)
                except ValueError:
                    raise MalformedModel(f"line {line_no}: bad score {score!r}", path) from None
                pieces.append(piece)
    except OSError as e:
        raise IoError(f"cannot read vocabulary {path}: {e}") from e
    try:
        return MonoTokenizer(language=language, kind="scored", pieces=tuple(pieces), scores=tuple(scores))
    except MalformedModel as e:
        raise MalformedModel(e.reason, path) from None


def file_sha256(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                h.update(chunk)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return h.hexdigest()


__all__ = [
    "MARKER",
    "UNK",
    "UNK_ID",
    "DEFAULT_VOCAB_SIZE",
    "MonoTokenizer",
    "TaggedText",
    "Segment",
    "VocabShortfallWarning",
    "normalize_text",
    "train_bpe",
    "encode_mono",
    "decode_mono",
    "viterbi_segment",
    "save_model",
    "load_model",
    "load_scored_vocab",
    "model_to_json",
    "file_sha256",
]
