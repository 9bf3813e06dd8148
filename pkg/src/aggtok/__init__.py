"""Aggregate tokenizers and code-switched ASR data tooling.

Monolingual subword tokenizers are combined into one tokenizer whose
token-ID ranges do not overlap, so every token carries its language. Around
that sit a synthetic code-switched corpus generator, a token-majority
language identifier and WER scoring.
"""

__version__ = "0.1.0"

from .aggregate import (
    AggregateTokenizer,
    LabeledToken,
    LabeledTokenSeq,
    build_aggregate,
    decode_tokens,
    encode_tagged,
    load_aggregate,
    save_aggregate,
    to_global,
    to_local,
)
from .corpus import UtteranceRecord, Waveform, filter_pool, load_manifest, read_wav, write_manifest, write_wav
from .csgen import GenConfig, SamplePlan, CsSample, generate_corpus, normalize_segment, plan_sample, render_sample
from .lid import LidReport, LidResult, evaluate_lid, utterance_lid
from .metrics import WerBreakdown, corpus_wer, cs_corpus_stats, wer
from .tokenizer import (
    MonoTokenizer,
    TaggedText,
    decode_mono,
    encode_mono,
    load_model,
    load_scored_vocab,
    save_model,
    train_bpe,
    viterbi_segment,
)
