import hashlib
import json
from pathlib import Path

import pytest

from aggtok.aggregate import encode_tagged
from aggtok.cli import main
from aggtok.corpus import write_manifest
from aggtok.tokenizer import TaggedText, save_model
from conftest import FIXTURES, fixture_lines, write_sine_pool


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_jsonl(path, rows):
    Path(path).write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture()
def agg_file(tmp_path, tok1024):
    paths = []
    for lang in ("en", "es"):
        save_model(tok1024[lang], tmp_path / f"{lang}.json")
        paths.append(f"{lang}={tmp_path / f'{lang}.json'}")
    assert main(["aggregate-build", "--part", paths[0], "--part", paths[1], "--out", str(tmp_path / "agg.json")]) == 0
    return tmp_path / "agg.json"


# ---------------------------------------------------------------- train-tokenizer


def test_train_tokenizer(tmp_path, capsys):
    out = tmp_path / "en.json"
    code, stdout, _ = run(capsys, "train-tokenizer", "--corpus", FIXTURES / "en.txt", "--vocab-size", 120,
                          "--lang", "en", "--out", out, "--json")
    assert code == 0
    summary = json.loads(stdout)
    assert summary["vocab_size"] == 120
    assert len(json.loads(out.read_text(encoding="utf-8"))["pieces"]) == 120


def test_train_tokenizer_shortfall_warns(tmp_path, capsys):
    code, _, err = run(capsys, "train-tokenizer", "--corpus", FIXTURES / "en.txt", "--vocab-size", 5000,
                       "--lang", "en", "--out", tmp_path / "en.json")
    assert code == 0
    assert "warning" in err


def test_train_tokenizer_missing_corpus(tmp_path, capsys):
    code, _, err = run(capsys, "train-tokenizer", "--corpus", tmp_path / "nope.txt", "--lang", "en",
                       "--out", tmp_path / "m.json")
    assert code == 2
    assert "--corpus" in err


def test_train_tokenizer_zero_vocab(tmp_path, capsys):
    code, _, err = run(capsys, "train-tokenizer", "--corpus", FIXTURES / "en.txt", "--vocab-size", 0,
                       "--lang", "en", "--out", tmp_path / "m.json")
    assert code == 1
    assert "--vocab-size" in err
    assert not (tmp_path / "m.json").exists()


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train-tokenizer", "--lang", "en"])
    assert info.value.code == 1


# ---------------------------------------------------------------- aggregate


def test_aggregate_inspect(agg_file, capsys):
    code, out, _ = run(capsys, "aggregate-inspect", agg_file)
    assert code == 0
    assert out.splitlines() == ["en 0..1023", "es 1024..2047", "total 2048"]


def test_aggregate_build_duplicate(tmp_path, tok1024, capsys):
    save_model(tok1024["en"], tmp_path / "en.json")
    part = f"en={tmp_path / 'en.json'}"
    code, _, _ = run(capsys, "aggregate-build", "--part", part, "--part", part, "--out", tmp_path / "a.json")
    assert code == 1


def test_aggregate_inspect_corrupted_hash(agg_file, capsys):
    es = agg_file.parent / "es.json"
    es.write_text(es.read_text(encoding="utf-8") + "\n", encoding="utf-8")
    code, _, err = run(capsys, "aggregate-inspect", agg_file)
    assert code == 1
    assert "es" in err and "es.json" in err


def test_aggregate_inspect_missing_file(tmp_path, capsys):
    assert run(capsys, "aggregate-inspect", tmp_path / "none.json")[0] == 2


# ---------------------------------------------------------------- encode / decode


def test_encode_decode_round_trip(agg_file, tmp_path, capsys):
    rows = [
        {"id": "u1", "segments": [{"lang": "es", "text": "con qué departamento"}, {"lang": "en", "text": "feedback"}]},
        {"id": "u2", "segments": [{"lang": "en", "text": fixture_lines("en")[2]}]},
    ]
    src = write_jsonl(tmp_path / "in.jsonl", rows)
    code, out, _ = run(capsys, "encode", "--agg", agg_file, "--input", src, "--output", tmp_path / "ids.jsonl")
    assert code == 0 and out == ""
    code, out, _ = run(capsys, "decode", "--agg", agg_file, "--input", tmp_path / "ids.jsonl")
    assert code == 0
    back = [json.loads(l) for l in out.splitlines()]
    assert [b["id"] for b in back] == ["u1", "u2"]
    assert [b["segments"] for b in back] == [r["segments"] for r in rows]


def test_decode_out_of_range_is_per_line(agg_file, tmp_path, capsys):
    src = write_jsonl(tmp_path / "ids.jsonl", [{"token_ids": [5, 1030]}, {"token_ids": [1, 2048]}, {"token_ids": [7]}])
    code, out, err = run(capsys, "decode", "--agg", agg_file, "--input", src, "--json")
    assert code == 1
    doc = json.loads(out)
    assert doc["errors"] == 1
    assert [("error" in r) for r in doc["results"]] == [False, True, False]
    assert doc["results"][1]["line"] == 2
    assert "line 2" in err


def test_encode_empty_input(agg_file, tmp_path, capsys):
    (tmp_path / "empty.jsonl").write_text("", encoding="utf-8")
    code, out, _ = run(capsys, "encode", "--agg", agg_file, "--input", tmp_path / "empty.jsonl")
    assert code == 0 and out == ""


# ---------------------------------------------------------------- lid-eval / wer / stats


def test_lid_eval_monolingual(agg_file, agg_en_es, tmp_path, capsys):
    rows = []
    for lang in ("en", "es"):
        for line in fixture_lines(lang):
            rows.append({"ref_lang": lang, "token_ids": encode_tagged(agg_en_es, TaggedText.of((lang, line))).ids})
    src = write_jsonl(tmp_path / "lid.jsonl", rows)
    code, out, _ = run(capsys, "lid-eval", "--agg", agg_file, "--input", src, "--json")
    assert code == 0
    report = json.loads(out)
    assert [r["accuracy"] for r in report["rows"]] == [1.0, 1.0]


def test_wer_identical(tmp_path, capsys):
    rows = [{"id": i, "text": t} for i, t in enumerate(fixture_lines("es")[:10])]
    ref = write_jsonl(tmp_path / "ref.jsonl", rows)
    hyp = write_jsonl(tmp_path / "hyp.jsonl", rows[::-1])
    code, out, _ = run(capsys, "wer", "--ref", ref, "--hyp", hyp, "--json")
    assert code == 0
    assert json.loads(out)["wer"] == 0.0


def test_wer_counts_and_normalize(tmp_path, capsys):
    ref = write_jsonl(tmp_path / "ref.jsonl", [{"id": "a", "text": "a b c"}, {"id": "b", "text": "Hello, World"}])
    hyp = write_jsonl(tmp_path / "hyp.jsonl", [{"id": "a", "text": "a x c"}, {"id": "b", "text": "hello world"}])
    code, out, _ = run(capsys, "wer", "--ref", ref, "--hyp", hyp, "--json")
    assert json.loads(out)["substitutions"] == 3
    code, out, _ = run(capsys, "wer", "--ref", ref, "--hyp", hyp, "--normalize", "--json")
    assert json.loads(out)["wer"] == pytest.approx(1 / 5)


def test_wer_id_mismatch(tmp_path, capsys):
    ref = write_jsonl(tmp_path / "ref.jsonl", [{"id": "a", "text": "x"}])
    hyp = write_jsonl(tmp_path / "hyp.jsonl", [{"id": "b", "text": "x"}])
    assert run(capsys, "wer", "--ref", ref, "--hyp", hyp)[0] == 1


# ---------------------------------------------------------------- csgen


@pytest.fixture()
def pool_manifests(tmp_path):
    paths = []
    for i, lang in enumerate(("en", "es")):
        durs = [0.5 + 0.01 * (k % 15) for k in range(40)]
        recs = write_sine_pool(tmp_path / "pool", lang, durs, seed=i)
        paths.append(tmp_path / f"{lang}.jsonl")
        write_manifest(paths[-1], recs)
    return paths


def _short_flags(manifests):
    flags = []
    for m in manifests:
        flags += ["--manifest", m]
    return flags + ["--min-duration", 1.7, "--max-duration", 1.9, "--min-seg-dur", 0.4,
                    "--pause-range", 0, 0.05, "--num-samples", 12]


def _digest(directory):
    h = hashlib.sha256()
    for p in sorted(Path(directory).iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes() if p.name != "stats.json" else b"")
    return h.hexdigest()


def test_csgen_deterministic(tmp_path, pool_manifests, capsys):
    flags = _short_flags(pool_manifests)
    for name, jobs in (("a", 1), ("b", 3)):
        code, out, err = run(capsys, "csgen", *flags, "--seed", 5, "--jobs", jobs, "--out", tmp_path / name, "--json")
        assert code == 0, err
        assert json.loads(out)["samples"] == 12
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    code, _, _ = run(capsys, "csgen", *flags, "--seed", 6, "--out", tmp_path / "c")
    assert code == 0
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")
    code, out, _ = run(capsys, "stats", tmp_path / "a" / "manifest.jsonl", "--json")
    assert code == 0 and json.loads(out)["utterances"] == 12


def test_csgen_config_merge(tmp_path, pool_manifests, capsys):
    cfg = tmp_path / "gen.toml"
    cfg.write_text(
        "manifests = [" + ", ".join(json.dumps(str(p)) for p in pool_manifests) + "]\n"
        f"out_dir = {json.dumps(str(tmp_path / 'from_cfg'))}\n"
        "min_gen_sample_duration = 1.7\nmax_gen_sample_duration = 1.9\nmin_seg_dur = 0.4\n"
        "pause_range = [0.0, 0.05]\nnum_samples = 4\nseed = 1\njobs = 2\n",
        encoding="utf-8",
    )
    code, out, err = run(capsys, "csgen", "--config", cfg, "--num-samples", 6, "--json")
    assert code == 0, err
    stats = json.loads(out)
    assert stats["samples"] == 6
    assert stats["out_dir"] == str(tmp_path / "from_cfg")
    written = json.loads((tmp_path / "from_cfg" / "stats.json").read_text(encoding="utf-8"))
    assert written["config"]["seed"] == 1


def test_csgen_config_errors(tmp_path, pool_manifests, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("bogus_key = 3\n", encoding="utf-8")
    assert run(capsys, "csgen", "--config", cfg, "--out", tmp_path / "o")[0] == 1
    assert run(capsys, "csgen", "--config", tmp_path / "missing.toml", "--out", tmp_path / "o")[0] == 2
    flags = _short_flags(pool_manifests)
    assert run(capsys, "csgen", *flags, "--out", tmp_path / "o", "--pause-range", 1, 0)[0] == 1


def test_csgen_stuck_exit_code(tmp_path, pool_manifests, capsys):
    flags = [a for m in pool_manifests for a in ("--manifest", m)]
    code, out, _ = run(capsys, "csgen", *flags, "--min-duration", 60, "--max-duration", 70, "--min-seg-dur", 0.4, "--pause-range", 0, 0,
                       "--num-samples", 2, "--out", tmp_path / "o", "--json")
    assert code == 3
    assert json.loads(out)["exit_code"] == 3
    assert not (tmp_path / "o").exists()


# ---------------------------------------------------------------- --json everywhere


def test_json_output_parses(agg_file, tmp_path, capsys):
    ids = write_jsonl(tmp_path / "ids.jsonl", [{"token_ids": [1, 2, 1500]}])
    tagged = write_jsonl(tmp_path / "t.jsonl", [{"segments": [{"lang": "en", "text": "hello"}]}])
    ref = write_jsonl(tmp_path / "ref.jsonl", [{"id": 1, "text": "a b"}])
    lid = write_jsonl(tmp_path / "lid.jsonl", [{"ref_lang": "en", "token_ids": [1, 2]}])
    commands = [
        ["train-tokenizer", "--corpus", FIXTURES / "es.txt", "--vocab-size", 100, "--lang", "es", "--out", tmp_path / "t.json"],
        ["aggregate-inspect", agg_file],
        ["encode", "--agg", agg_file, "--input", tagged],
        ["decode", "--agg", agg_file, "--input", ids],
        ["lid-eval", "--agg", agg_file, "--input", lid],
        ["wer", "--ref", ref, "--hyp", ref],
    ]
    for argv in commands:
        code, out, _ = run(capsys, *argv, "--json")
        assert code == 0, argv
        json.loads(out)
    code, out, _ = run(capsys, "aggregate-inspect", tmp_path / "missing.json", "--json")
    assert code == 2
    assert json.loads(out)["exit_code"] == 2
