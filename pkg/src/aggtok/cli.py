"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 I/O error, 3 generation failure.
With ``--json`` every subcommand writes exactly one JSON document to stdout;
diagnostics always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from . import __version__
from .aggregate import build_aggregate, decode_tokens, encode_tagged, load_aggregate, save_aggregate
from .corpus import iter_jsonl, load_manifest
from .csgen import GenConfig, build_pools, format_stats, generate_corpus
from .errors import AggtokError, IoError, MalformedLine, ValidationError
from .lid import evaluate_lid, utterance_lid
from .metrics import corpus_wer, cs_corpus_stats
from .tokenizer import DEFAULT_VOCAB_SIZE, TaggedText, VocabShortfallWarning, load_model, save_model, train_bpe

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("aggtok")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(args, obj, text: str | None = None):
    if args.json:
        print(json.dumps(obj, ensure_ascii=False))
    elif text is not None:
        print(text)


def _lang_path(value: str) -> tuple[str, str]:
    lang, sep, path = value.partition("=")
    if not sep or not lang or not path:
        raise argparse.ArgumentTypeError(f"expected LANG=PATH, got {value!r}")
    return lang, path


# ---------------------------------------------------------------- tokenizers


def cmd_train_tokenizer(args) -> int:
    if args.vocab_size < 1:
        raise ValidationError(f"--vocab-size must be a positive integer, got {args.vocab_size}")
    try:
        with open(args.corpus, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise IoError(f"cannot read --corpus {args.corpus}: {e}") from e
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", VocabShortfallWarning)
        try:
            tok = train_bpe(lines, args.vocab_size, args.lang, normalize=not args.no_normalize)
        except ValidationError as e:
            raise ValidationError(f"--vocab-size/--corpus: {e}") from e
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    save_model(tok, args.out)
    summary = {
        "language": tok.language,
        "kind": tok.kind,
        "vocab_size": tok.vocab_size,
        "requested": args.vocab_size,
        "merges": len(tok.merges),
        "out": args.out,
    }
    _emit(args, summary, f"{tok.language}: {tok.vocab_size} pieces ({len(tok.merges)} merges) -> {args.out}")
    return 0


def _ranges_json(agg) -> list[dict]:
    return [{"language": l, "first": a, "last": b, "vocab_size": b - a + 1} for l, a, b in agg.ranges()]


def _ranges_text(agg) -> str:
    lines = [f"{l} {a}..{b}" for l, a, b in agg.ranges()]
    lines.append(f"total {agg.total_vocab}")
    return "\n".join(lines)


def cmd_aggregate_build(args) -> int:
    parts, paths = [], {}
    for lang, path in args.part:
        tok = load_model(path)
        if tok.language != lang:
            raise ValidationError(f"--part {lang}={path}: model language is {tok.language!r}")
        parts.append((lang, tok))
        paths[lang] = path
    if len(paths) != len(parts):
        raise ValidationError("duplicate language in --part flags")
    agg = build_aggregate(parts)
    save_aggregate(agg, args.out, paths)
    _emit(args, {"out": args.out, "total_vocab": agg.total_vocab, "ranges": _ranges_json(agg)}, _ranges_text(agg))
    return 0


def cmd_aggregate_inspect(args) -> int:
    agg = load_aggregate(args.path)
    _emit(args, {"total_vocab": agg.total_vocab, "ranges": _ranges_json(agg)}, _ranges_text(agg))
    return 0


def _stream(args, handle) -> int:
    agg = load_aggregate(args.agg)
    results, errors = [], 0
    out = None
    try:
        if args.output:
            out = open(args.output, "w", encoding="utf-8", newline="\n")
    except OSError as e:
        raise IoError(f"cannot write {args.output}: {e}") from e
    try:
        try:
            lines = iter_jsonl(args.input)
            for line_no, obj in lines:
                try:
                    result = handle(agg, obj)
                except (AggtokError, KeyError, TypeError, ValueError) as e:
                    errors += 1
                    msg = f"missing field {e}" if isinstance(e, KeyError) else str(e)
                    result = {"line": line_no, "error": msg}
                    print(f"line {line_no}: {msg}", file=sys.stderr)
                if isinstance(obj, dict) and "id" in obj:
                    result = {"id": obj["id"], **result}
                if out is not None:
                    out.write(json.dumps(result, ensure_ascii=False) + "\n")
                elif args.json:
                    results.append(result)
                else:
                    print(json.dumps(result, ensure_ascii=False))
        except MalformedLine as e:
            errors += 1
            print(str(e), file=sys.stderr)
    finally:
        if out is not None:
            out.close()
    if args.json:
        summary = {"errors": errors}
        if out is None:
            summary["results"] = results
        print(json.dumps(summary, ensure_ascii=False))
    return 1 if errors else 0


def _encode_one(agg, obj):
    segs = obj["segments"] if isinstance(obj, dict) else obj
    tagged = TaggedText.from_json(segs)
    seq = encode_tagged(agg, tagged)
    return {"token_ids": seq.ids}


def _decode_one(agg, obj):
    ids = obj["token_ids"] if isinstance(obj, dict) else obj
    if not isinstance(ids, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in ids):
        raise ValidationError("token_ids must be a list of integers")
    tagged, langs = decode_tokens(agg, ids)
    return {"segments": tagged.to_json(), "token_langs": langs}


def cmd_encode(args) -> int:
    return _stream(args, _encode_one)


def cmd_decode(args) -> int:
    return _stream(args, _decode_one)


# ---------------------------------------------------------------- evaluation


def cmd_lid_eval(args) -> int:
    agg = load_aggregate(args.agg)
    pairs = []
    for line_no, obj in iter_jsonl(args.input):
        if not isinstance(obj, dict) or "ref_lang" not in obj or "token_ids" not in obj:
            raise MalformedLine(line_no, "expected {\"ref_lang\", \"token_ids\"}")
        try:
            pairs.append((obj["ref_lang"], utterance_lid(agg, obj["token_ids"])))
        except AggtokError as e:
            raise MalformedLine(line_no, str(e)) from None
    report = evaluate_lid(pairs)
    _emit(args, report.to_json(), report.format())
    return 0


def _read_texts(path, flag) -> dict:
    texts = {}
    for line_no, obj in iter_jsonl(path):
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise MalformedLine(line_no, f"{flag} rows need \"id\" and \"text\"")
        key = str(obj["id"])
        if key in texts:
            raise MalformedLine(line_no, f"duplicate id {key!r} in {flag}")
        texts[key] = obj["text"]
    return texts


def cmd_wer(args) -> int:
    ref = _read_texts(args.ref, "--ref")
    hyp = _read_texts(args.hyp, "--hyp")
    missing = sorted(set(ref) - set(hyp))
    extra = sorted(set(hyp) - set(ref))
    if missing or extra:
        raise ValidationError(
            f"--ref/--hyp ids differ: {len(missing)} missing from --hyp, {len(extra)} only in --hyp"
            + (f" (first missing: {missing[0]!r})" if missing else "")
        )
    b = corpus_wer(((ref[k], hyp[k]) for k in sorted(ref)), normalize=args.normalize)
    text = (
        f"WER {100 * b.wer:.2f}% ({b.errors}/{b.ref_words}) "
        f"S={b.substitutions} D={b.deletions} I={b.insertions}"
    )
    _emit(args, b.to_json(), text)
    return 0


def cmd_stats(args) -> int:
    stats = cs_corpus_stats(args.manifest)
    text = "\n".join(f"{k:<24} {v}" for k, v in stats.items())
    _emit(args, stats, text)
    return 0


# ---------------------------------------------------------------- generation

_CSGEN_FLAGS = {
    "min_gen_sample_duration": "min_duration",
    "max_gen_sample_duration": "max_duration",
    "target_total": "target_hours",
    "num_samples": "num_samples",
    "switch_policy": "switch_policy",
    "pause_range": "pause_range",
    "target_rms_dbfs": "target_rms_dbfs",
    "min_seg_dur": "min_seg_dur",
    "seed": "seed",
    "max_resample_attempts": "max_resample_attempts",
    "sample_rate": "sample_rate",
    "reuse_across_samples": "reuse_across_samples",
}


def load_config(path) -> dict:
    try:
        with open(path, "rb") as f:
            cfg = tomllib.load(f)
    except OSError as e:
        raise IoError(f"cannot read --config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"--config {path}: {e}") from e
    allowed = set(_CSGEN_FLAGS) | {"manifests", "out_dir", "jobs"}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValidationError(f"--config {path}: unknown keys {unknown}")
    return cfg


def cmd_csgen(args) -> int:
    merged = load_config(args.config) if args.config else {}
    for key, attr in _CSGEN_FLAGS.items():
        value = getattr(args, attr)
        if value is not None:
            merged[key] = value
    manifests = args.manifest or merged.pop("manifests", None)
    merged.pop("manifests", None)
    out_dir = args.out or merged.pop("out_dir", None)
    merged.pop("out_dir", None)
    jobs = args.jobs if args.jobs is not None else merged.pop("jobs", None)
    merged.pop("jobs", None)
    if not manifests:
        raise ValidationError("--manifest is required (or 'manifests' in --config)")
    if not out_dir:
        raise ValidationError("--out is required (or 'out_dir' in --config)")
    try:
        cfg = GenConfig(**merged)
    except TypeError as e:
        raise ValidationError(f"bad generation config: {e}") from e
    records = []
    for path in manifests:
        records.extend(load_manifest(path))
    pools, dropped = build_pools(records, cfg)
    for reason, n in sorted(dropped.items()):
        print(f"dropped {n} records: {reason}", file=sys.stderr)
    stats = generate_corpus(pools, cfg, out_dir, jobs=jobs)
    stats["dropped"] = dict(sorted(dropped.items()))
    stats["out_dir"] = os.path.abspath(out_dir)
    _emit(args, stats, format_stats(stats))
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable JSON on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="aggtok", description="Aggregate tokenizers and synthetic code-switched corpora.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train-tokenizer", parents=[common], help="train a BPE tokenizer")
    s.add_argument("--corpus", required=True, help="text file, one line per sentence")
    s.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
    s.add_argument("--lang", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-normalize", action="store_true", help="skip NFC + lowercasing")
    s.set_defaults(func=cmd_train_tokenizer)

    s = sub.add_parser("aggregate-build", parents=[common], help="combine tokenizers into an aggregate")
    s.add_argument("--part", type=_lang_path, action="append", required=True, metavar="LANG=MODEL_PATH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_aggregate_build)

    s = sub.add_parser("aggregate-inspect", parents=[common], help="print per-language ID ranges")
    s.add_argument("path")
    s.set_defaults(func=cmd_aggregate_inspect)

    for name, func, what in (
        ("encode", cmd_encode, "tagged text to global token IDs"),
        ("decode", cmd_decode, "global token IDs to tagged text"),
    ):
        s = sub.add_parser(name, parents=[common], help=what)
        s.add_argument("--agg", required=True)
        s.add_argument("--input", required=True)
        s.add_argument("--output", help="write results here instead of stdout")
        s.set_defaults(func=func)

    s = sub.add_parser("lid-eval", parents=[common], help="token-majority LID accuracy report")
    s.add_argument("--agg", required=True)
    s.add_argument("--input", required=True, help='JSONL of {"ref_lang", "token_ids"}')
    s.set_defaults(func=cmd_lid_eval)

    s = sub.add_parser("csgen", parents=[common], help="generate a synthetic code-switched corpus")
    s.add_argument("--config", help="TOML file of generation settings; flags override it")
    s.add_argument("--manifest", action="append", help="monolingual JSONL manifest (repeatable)")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, help="render workers (default: all cores)")
    s.add_argument("--seed", type=int)
    s.add_argument("--min-duration", type=float)
    s.add_argument("--max-duration", type=float)
    s.add_argument("--target-hours", type=float)
    s.add_argument("--num-samples", type=int)
    s.add_argument("--switch-policy", choices=["alternate", "uniform", "free"])
    s.add_argument("--pause-range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--target-rms-dbfs", type=float)
    s.add_argument("--min-seg-dur", type=float)
    s.add_argument("--max-resample-attempts", type=int)
    s.add_argument("--sample-rate", type=int)
    s.add_argument("--no-reuse", dest="reuse_across_samples", action="store_const", const=False)
    s.set_defaults(func=cmd_csgen)

    s = sub.add_parser("wer", parents=[common], help="corpus WER from two JSONL files")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--normalize", action="store_true", help="lowercase and strip punctuation")
    s.set_defaults(func=cmd_wer)

    s = sub.add_parser("stats", parents=[common], help="describe a generated manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except AggtokError as e:
        print(f"error: {e}", file=sys.stderr)
        if args.json:
            print(json.dumps({"error": str(e), "exit_code": e.exit_code}))
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        if args.json:
            print(json.dumps({"error": str(e), "exit_code": 2}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
