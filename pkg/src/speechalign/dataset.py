"""Paired speech-text manifests: loading, hash splits, corpus statistics,
and a synthetic tone-word corpus generator for desk-scale end-to-end runs.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dsp
from .encoders import FormatError
from .seeds import rng_for, unit_fraction

SPLIT_NAMES = ("train", "dev", "test")
TRAIN_FRACTION = 0.8
DEV_FRACTION = 0.1
MIN_SPLIT_RECORDS = 10

MANIFEST_FIELDS = ("id", "audio", "text", "category", "language")

WORD_SECONDS = 0.1
TONE_SLOT_BASE_HZ = 400.0
TONE_SLOT_STEP_HZ = 180.0
TONES_PER_WORD = 2

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class ManifestRecord:
    id: str
    audio: str
    text: str
    category: str
    language: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.text:
            raise ValueError(f"{self.id}: text must be non-empty")


@dataclass
class SplitAssignment:
    assignment: dict[str, str]
    seed: int

    def ids_for(self, split: str) -> list[str]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        return [rec_id for rec_id, name in self.assignment.items() if name == split]


def load_manifest(path: str) -> list[ManifestRecord]:
    """Read a JSON Lines manifest, preserving order and validating ids."""
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            missing = [f for f in MANIFEST_FIELDS if f not in obj]
            if missing:
                raise FormatError(f"{path}:{lineno}: missing fields {missing}")
            try:
                rec = ManifestRecord(**{f: obj[f] for f in MANIFEST_FIELDS})
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if rec.id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_manifest(path: str, records: Sequence[ManifestRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({f: getattr(rec, f) for f in MANIFEST_FIELDS}, sort_keys=True))
            fh.write("\n")


def split(records: Sequence[ManifestRecord], seed: int) -> SplitAssignment:
    """Assign each id to train/dev/test by a seeded hash of the id.

    Hash-based assignment is independent of record order and stable under
    appends, so a growing manifest never reshuffles existing items.
    """
    if len(records) < MIN_SPLIT_RECORDS:
        raise ValueError(f"need at least {MIN_SPLIT_RECORDS} records to split, got {len(records)}")
    assignment: dict[str, str] = {}
    for rec in records:
        u = unit_fraction(seed, "split", rec.id)
        if u < TRAIN_FRACTION:
            assignment[rec.id] = "train"
        elif u < TRAIN_FRACTION + DEV_FRACTION:
            assignment[rec.id] = "dev"
        else:
            assignment[rec.id] = "test"
    return SplitAssignment(assignment=assignment, seed=seed)


def corpus_stats(records: Sequence[ManifestRecord]) -> dict:
    """Exact corpus statistics: token counts are whitespace-split, unique
    tokens case-folded."""
    n = len(records)
    token_counts = [len(rec.text.split()) for rec in records]
    unique_tokens: set[str] = set()
    for rec in records:
        unique_tokens.update(tok.casefold() for tok in rec.text.split())
    per_category = Counter(rec.category for rec in records)
    return {
        "n_sentences": n,
        "n_unique_tokens": len(unique_tokens),
        "avg_tokens_per_sentence": (sum(token_counts) / n) if n else 0.0,
        "max_tokens": max(token_counts, default=0),
        "avg_chars": (sum(len(rec.text) for rec in records) / n) if n else 0.0,
        "per_category_counts": dict(sorted(per_category.items())),
    }


def _pseudo_vocabulary(vocab_size: int, seed: int) -> list[str]:
    """Deterministic list of distinct two-syllable pseudo-words."""
    rng = rng_for(seed, "vocab")
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < vocab_size:
        syllables = []
        for _ in range(2):
            c = _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            v = _VOWELS[int(rng.integers(len(_VOWELS)))]
            syllables.append(c + v)
        word = "".join(syllables)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def word_tone_frequencies(word_index: int) -> list[float]:
    """Frequencies of the tone pair encoding one vocabulary word.

    Word i maps to the i-th 2-combination of frequency slots, so distinct
    words always get distinct frequency sets.
    """
    # Unrank the combination {a, b} with a < b from the ordered enumeration.
    a = 0
    remaining = word_index
    while True:
        span = _slots_above(a)
        if remaining < span:
            b = a + 1 + remaining
            break
        remaining -= span
        a += 1
    return [TONE_SLOT_BASE_HZ + TONE_SLOT_STEP_HZ * a, TONE_SLOT_BASE_HZ + TONE_SLOT_STEP_HZ * b]


def _slots_above(a: int) -> int:
    max_slot_hz = dsp.PIPELINE_SAMPLE_RATE / 2.0 - TONE_SLOT_STEP_HZ
    n_slots = int((max_slot_hz - TONE_SLOT_BASE_HZ) / TONE_SLOT_STEP_HZ)
    return n_slots - a


def word_audio(word_index: int, sample_rate_hz: int = dsp.PIPELINE_SAMPLE_RATE) -> np.ndarray:
    """100 ms two-tone segment for one vocabulary word."""
    n = int(WORD_SECONDS * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    f1, f2 = word_tone_frequencies(word_index)
    return 0.45 * np.sin(2 * np.pi * f1 * t) + 0.35 * np.sin(2 * np.pi * f2 * t)


def generate_synthetic(
    out_dir: str,
    n: int,
    seed: int,
    vocab_size: int = 32,
    words_per_sentence: int = 4,
) -> list[ManifestRecord]:
    """Write a synthetic paired corpus: manifest.jsonl plus one WAV per sentence.

    Sentences are distinct pseudo-word sequences; each word maps to a unique
    two-tone 100 ms audio segment, so the text <-> audio mapping is injective
    and the whole corpus is a pure function of (n, seed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if vocab_size**words_per_sentence < n:
        raise ValueError(
            f"cannot draw {n} distinct sentences from a capacity of "
            f"{vocab_size}**{words_per_sentence}"
        )
    max_words = _slots_above(0) * (_slots_above(0) + 1) // 2
    if vocab_size > max_words:
        raise ValueError(f"vocab_size {vocab_size} exceeds the {max_words} encodable words")
    vocab = _pseudo_vocabulary(vocab_size, seed)
    rng = rng_for(seed, "sentences")
    sentences: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    while len(sentences) < n:
        idx = tuple(int(i) for i in rng.integers(vocab_size, size=words_per_sentence))
        if idx not in seen:
            seen.add(idx)
            sentences.append(idx)
    os.makedirs(os.path.join(out_dir, "wav"), exist_ok=True)
    records: list[ManifestRecord] = []
    width = max(4, len(str(n - 1)))
    for i, idx in enumerate(sentences):
        rec_id = f"utt-{i:0{width}d}"
        rel_audio = os.path.join("wav", f"{rec_id}.wav")
        samples = np.concatenate([word_audio(j) for j in idx])
        dsp.write_wav(os.path.join(out_dir, rel_audio), samples)
        records.append(
            ManifestRecord(
                id=rec_id,
                audio=rel_audio,
                text=" ".join(vocab[j] for j in idx),
                category="synthetic",
                language="syn",
            )
        )
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records
