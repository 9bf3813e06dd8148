import random
import warnings
from pathlib import Path

import numpy as np
import pytest

from aggtok.aggregate import build_aggregate
from aggtok.corpus import UtteranceRecord, Waveform, write_wav
from aggtok.tokenizer import VocabShortfallWarning, train_bpe

FIXTURES = Path(__file__).parent / "fixtures"
LANGS = ("en", "es", "hi")

_ALPHABETS = {
    "en": ("bcdfghjklmnprstvwyz", "aeiou"),
    "es": ("bcdfghjlmnpqrstvyzñ", "aeiouáéíóú"),
    "hi": ("कखगचजटडतदनपबमयरलवसह", "ािीुेोौ"),
}


def fixture_lines(lang):
    return (FIXTURES / f"{lang}.txt").read_text(encoding="utf-8").splitlines()


def pseudo_lines(lang, n, seed):
    """Zipf-distributed pseudo-words built from a language's syllables."""
    rng = random.Random(f"{lang}-{seed}")
    cons, vows = _ALPHABETS[lang]
    syllables = [c + v for c in cons for v in vows]
    words = ["".join(rng.choice(syllables) for _ in range(rng.randint(1, 3))) for _ in range(1500)]
    weights = [1.0 / (i + 1) for i in range(len(words))]
    return [" ".join(rng.choices(words, weights, k=10)) for _ in range(n)]


def train_quiet(lines, vocab_size, lang):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VocabShortfallWarning)
        return train_bpe(lines, vocab_size, lang)


@pytest.fixture(scope="session")
def tok1024():
    """1024-piece tokenizers per language, trained on fixture + pseudo text."""
    out = {}
    for lang in LANGS:
        tok = train_bpe(fixture_lines(lang) + pseudo_lines(lang, 1500, 1), 1024, lang)
        assert tok.vocab_size == 1024
        out[lang] = tok
    return out


@pytest.fixture(scope="session")
def agg_en_es(tok1024):
    return build_aggregate([("en", tok1024["en"]), ("es", tok1024["es"])])


@pytest.fixture(scope="session")
def agg_en_hi(tok1024):
    return build_aggregate([("en", tok1024["en"]), ("hi", tok1024["hi"])])


@pytest.fixture(scope="session")
def toy_tokenizers():
    """Small tokenizers trained on the hand-written sentences only."""
    return {lang: train_quiet(fixture_lines(lang), 200, lang) for lang in LANGS}


def sine(duration, amplitude=0.3, freq=220.0, sr=16000):
    t = np.arange(int(round(duration * sr))) / sr
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t), sr)


def write_sine_pool(directory, lang, durations, texts=None, seed=0, sr=16000):
    """Write one WAV per duration with random amplitude/frequency; return records."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i, dur in enumerate(durations):
        amp = float(rng.uniform(0.02, 0.8))
        freq = float(rng.uniform(100, 900))
        path = directory / f"{lang}_{i:04d}.wav"
        write_wav(path, sine(dur, amp, freq, sr))
        text = texts[i % len(texts)] if texts else f"{lang} utterance {i}"
        records.append(UtteranceRecord(str(path), float(dur), text, lang))
    return records


def fake_pool(lang, durations):
    """Records without audio, for planning-only tests."""
    return [UtteranceRecord(f"/nonexistent/{lang}_{i}.wav", float(d), f"{lang} {i}", lang) for i, d in enumerate(durations)]


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "FAIL"
        _CRITERIA[num] = (title, status, call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[num]
        terminalreporter.write_line(f"[{status}] {num:>2}. {title} ({secs:.2f} s)")
