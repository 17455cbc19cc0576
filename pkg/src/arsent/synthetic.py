"""Synthetic hotel-review corpus in the HTL file layout.

Stand-in for the real HTL file when it is not on disk. Reviews are built
from a Zipf-distributed filler vocabulary (real Arabic hotel words plus
pseudo-words) with a handful of polarity markers mixed in; a share of the
markers come from the opposite class and a share of the labels are flipped,
so the task has an accuracy ceiling well below 1 and a model can overfit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from arsent.nn.rng import stream

POSITIVE_MARKERS = (
    "جيد", "رائع", "ممتاز", "جميل", "هادئ", "مساعدون", "نظيف", "مريح", "رائعه",
    "ممتازه", "جميله", "نظيفه", "مريحه", "لطيف", "ودود", "انصح", "احببت", "معجب",
    "مميز", "افضل", "سعيد", "مذهل", "واسع", "مناسب", "متعاونون", "راقي",
)
NEGATIVE_MARKERS = (
    "سيء", "قذر", "مزعج", "ضعيف", "سيئه", "قذره", "مزعجه", "متسخ", "رديء", "مخيب",
    "غالي", "ضيق", "بطيء", "وقح", "كريه", "مكسور", "فوضى", "اسوا", "مقرف", "ازعاج",
    "حشرات", "رطوبه", "تعبان", "مهمل", "خائب", "باهت",
)
HOTEL_WORDS = (
    "الفندق", "الغرفه", "الموظفين", "الاستقبال", "الافطار", "المطعم", "الموقع", "الخدمه",
    "العاملون", "المرافق", "الغرف", "السرير", "الحمام", "المسبح", "الشاطئ", "الاقامه",
    "كان", "في", "من", "على", "الى", "مع", "هذا", "انا", "و", "ايضا", "حيث", "انه", "قد",
    "جدا", "بهذا", "كانت", "لكن", "عن", "كل", "بعد", "قبل", "يوم", "ليله", "المدينه",
)
_LETTERS = "ابتثجحخدذرزسشصضطظعغفقكلمنهويةىأإء"
_DECORATION = ("!", "!!", "،", ".", "؟", "…", ":)", "2019", "٥")


@dataclass(frozen=True)
class SyntheticConfig:
    n_positive: int = 10766
    n_negative: int = 2645
    n_neutral: int = 2161
    filler_vocab: int = 5000
    zipf_exponent: float = 1.05
    median_length: float = 22.0
    length_sigma: float = 0.6
    min_length: int = 6
    max_length: int = 160
    mean_markers: float = 4.5
    marker_purity: float = 0.94
    label_noise: float = 0.01
    seed: int = 0


def _pseudo_words(rng: np.random.Generator, count: int, exclude: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(exclude)
    while len(words) < count:
        n = int(rng.integers(2, 7))
        w = "".join(rng.choice(list(_LETTERS), size=n))
        if rng.random() < 0.3:
            w = "ال" + w
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _zipf(n: int, s: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def generate(config: SyntheticConfig = SyntheticConfig()) -> list[tuple[str, str]]:
    """Return (polarity, text) rows in a shuffled order."""
    rng = stream(config.seed, "synth")
    markers = set(POSITIVE_MARKERS) | set(NEGATIVE_MARKERS) | set(HOTEL_WORDS)
    filler = list(HOTEL_WORDS) + _pseudo_words(rng, config.filler_vocab - len(HOTEL_WORDS), markers)
    filler_cdf = np.cumsum(_zipf(len(filler), config.zipf_exponent))
    lex = {1: POSITIVE_MARKERS, 0: NEGATIVE_MARKERS}
    lex_cdf = {k: np.cumsum(_zipf(len(v), 0.8)) for k, v in lex.items()}

    def draw(words, cdf, size=None):
        idx = np.minimum(np.searchsorted(cdf, rng.random(size)), len(words) - 1)
        return [words[i] for i in idx] if size is not None else words[int(idx)]

    def review(cls: int | None) -> str:
        length = int(np.clip(round(config.median_length * np.exp(rng.normal(0, config.length_sigma))),
                             config.min_length, config.max_length))
        words = draw(filler, filler_cdf, length)
        k = min(length, 1 + int(rng.poisson(config.mean_markers - 1)))
        for pos in rng.choice(length, size=k, replace=False):
            if cls is None:
                side = int(rng.integers(0, 2))
            else:
                side = cls if rng.random() < config.marker_purity else 1 - cls
            words[pos] = draw(lex[side], lex_cdf[side])
        if rng.random() < 0.3:
            words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(_DECORATION)))
        return " ".join(words)

    rows = []
    for cls, tag, n in ((1, "positive", config.n_positive), (0, "negative", config.n_negative)):
        for _ in range(n):
            # label noise: the tag stays, the text is written for the other class
            text_cls = cls if rng.random() >= config.label_noise else 1 - cls
            rows.append((tag, review(text_cls)))
    rows += [("neutral", review(None)) for _ in range(config.n_neutral)]
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def write_htl_file(path: str | Path, config: SyntheticConfig = SyntheticConfig()) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(["polarity", "text"])
        w.writerows(generate(config))
    return path
