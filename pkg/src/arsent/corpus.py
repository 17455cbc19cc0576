"""Dataset ingest: LABR and HTL files to an encoded, partitioned corpus."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from arsent.errors import DataError, MalformedRecordError
from arsent.nn.rng import stream
from arsent.text import EncodedSequence, Vocabulary, build_vocabulary, encode_and_pad, preprocess
from arsent.training import split_indices

log = logging.getLogger(__name__)

DROPPED = None

LABR_EXPECTED = {"kept": 51056, "positive": 42832, "negative": 8224, "train": 40844, "test": 10212}
HTL_EXPECTED = {"positive": 10766, "negative": 2645, "train": 3967, "test": 1323}

HTL_POLARITY = {
    "positive": 1, "pos": 1, "1": 1,
    "negative": 0, "neg": 0, "-1": 0,
    "neutral": DROPPED, "neu": DROPPED, "mixed": DROPPED, "0": DROPPED,
}


@dataclass(frozen=True)
class RawReview:
    text: str
    rating: int | str
    source_id: str


@dataclass(frozen=True)
class LabeledCorpus:
    dataset: str
    texts: tuple[str, ...]
    labels: np.ndarray
    sequences: np.ndarray
    vocabulary: Vocabulary
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        if len(self.texts) != n or len(self.sequences) != n:
            raise DataError("texts, labels and sequences must have equal length")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        tr, te = set(map(int, self.train_idx)), set(map(int, self.test_idx))
        if tr & te or tr | te != set(range(n)):
            raise DataError("train/test partition must be disjoint and cover every document")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def max_len(self) -> int:
        return self.sequences.shape[1]

    def documents(self) -> Iterator[tuple[EncodedSequence, int]]:
        for text, seq, y in zip(self.texts, self.sequences, self.labels):
            yield EncodedSequence(tuple(int(i) for i in seq), len(text.split())), int(y)

    def class_counts(self, idx=None) -> tuple[int, int]:
        y = self.labels if idx is None else self.labels[idx]
        return int((y == 0).sum()), int((y == 1).sum())


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def assemble(
    dataset: str,
    texts: Sequence[str],
    labels: Sequence[int],
    *,
    max_len: int,
    vocab_size: int,
    train_fraction: float,
    seed: int,
    provenance: dict | None = None,
) -> LabeledCorpus:
    """Split, build the vocabulary from the training split only, encode everything."""
    tokens = [preprocess(t) for t in texts]
    train_idx, test_idx = split_indices(len(tokens), train_fraction, seed)
    vocab = build_vocabulary((tokens[i] for i in train_idx), vocab_size)
    seqs = np.array([encode_and_pad(t, vocab, max_len).indices for t in tokens], dtype=np.int64)
    seqs = seqs.reshape(len(tokens), max_len)
    return LabeledCorpus(
        dataset=dataset,
        texts=tuple(" ".join(t) for t in tokens),
        labels=np.asarray(labels, dtype=np.int64),
        sequences=seqs,
        vocabulary=vocab,
        train_idx=train_idx,
        test_idx=test_idx,
        provenance=dict(provenance or {}),
    )


# -- LABR -----------------------------------------------------------------------

def map_labr_label(rating, line: int | None = None) -> int | None:
    """4, 5 -> 1; 1, 2 -> 0; 3 -> None (dropped as neutral)."""
    try:
        r = int(str(rating).strip())
    except ValueError:
        raise MalformedRecordError(f"rating {rating!r} is not an integer", line) from None
    if r in (4, 5):
        return 1
    if r in (1, 2):
        return 0
    if r == 3:
        return DROPPED
    raise MalformedRecordError(f"rating {r} outside 1..5", line)


def read_labr(path: str | Path, rating_col: int = 0, text_col: int = -1, header: bool = False) -> list[RawReview]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            if header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            try:
                rating, text = fields[rating_col], fields[text_col]
            except IndexError:
                raise MalformedRecordError(f"expected rating and text columns, got {len(fields)} fields", lineno) from None
            out.append(RawReview(text, rating, str(lineno)))
    return out


@dataclass
class IngestResult:
    corpus: LabeledCorpus
    manifest: dict


def _check_expected(dataset: str, observed: dict, expected: dict) -> list[str]:
    mismatches = [f"{k}: observed {observed[k]}, expected {v}" for k, v in expected.items() if observed.get(k) != v]
    if mismatches:
        log.warning("%s counts differ from the published totals (%s)", dataset, "; ".join(mismatches))
    return mismatches


def ingest_labr(
    path: str | Path,
    *,
    max_len: int = 256,
    vocab_size: int = 10000,
    train_fraction: float = 0.8,
    seed: int = 0,
    rating_col: int = 0,
    text_col: int = -1,
    header: bool = False,
) -> IngestResult:
    raw = read_labr(path, rating_col, text_col, header)
    texts, labels = [], []
    dropped_neutral = dropped_empty = 0
    for rec in raw:
        y = map_labr_label(rec.rating, int(rec.source_id))
        if y is DROPPED:
            dropped_neutral += 1
            continue
        if not rec.text.strip():
            dropped_empty += 1
            continue
        texts.append(rec.text)
        labels.append(y)
    if dropped_empty:
        log.info("LABR: dropped %d empty reviews", dropped_empty)
    config = {"dataset": "labr", "max_len": max_len, "vocab_size": vocab_size,
              "train_fraction": train_fraction, "seed": seed,
              "rating_col": rating_col, "text_col": text_col, "header": header}
    sha = file_sha256(path)
    corpus = assemble("labr", texts, labels, max_len=max_len, vocab_size=vocab_size,
                      train_fraction=train_fraction, seed=seed,
                      provenance={"dataset": "labr", "config_hash": config_hash(config), "file_sha256": sha})
    neg, pos = corpus.class_counts()
    counts = {"read": len(raw), "kept": len(corpus), "positive": pos, "negative": neg,
              "dropped_neutral": dropped_neutral, "dropped_empty": dropped_empty,
              "train": len(corpus.train_idx), "test": len(corpus.test_idx)}
    manifest = {"dataset": "labr", "input": str(path), "file_sha256": sha, "config": config,
                "counts": counts, "expected_mismatch": _check_expected("LABR", counts, LABR_EXPECTED)}
    return IngestResult(corpus, manifest)


# -- HTL ------------------------------------------------------------------------

def map_htl_label(tag, line: int | None = None) -> int | None:
    if tag is None or not str(tag).strip():
        raise MalformedRecordError("missing polarity field", line)
    key = str(tag).strip().lower()
    if key not in HTL_POLARITY:
        raise MalformedRecordError(f"unknown polarity {tag!r}", line)
    return HTL_POLARITY[key]


def read_htl(path: str | Path, polarity_col: str = "polarity", text_col: str = "text",
             delimiter: str | None = None) -> list[RawReview]:
    if delimiter is None:
        delimiter = "," if str(path).endswith(".csv") else "\t"
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = {polarity_col, text_col} - set(reader.fieldnames or ())
        if missing:
            raise MalformedRecordError(f"missing column(s) {sorted(missing)} in header", 1)
        for rec in reader:
            line = reader.line_num
            out.append(RawReview(rec.get(text_col) or "", rec.get(polarity_col), str(line)))
    return out


def balance_classes(labels: Sequence[int], seed: int) -> np.ndarray:
    """Indices (in original order) keeping every minority document and an equal,
    randomly chosen number of majority documents."""
    labels = np.asarray(labels)
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    major, minor = (pos, neg) if len(pos) >= len(neg) else (neg, pos)
    chosen = stream(seed, "balance").permutation(major)[:len(minor)]
    return np.sort(np.concatenate([minor, chosen]))


def ingest_htl(
    path: str | Path,
    balance: bool = True,
    *,
    max_len: int = 128,
    vocab_size: int = 10000,
    train_fraction: float = 0.75,
    seed: int = 0,
    polarity_col: str = "polarity",
    text_col: str = "text",
    delimiter: str | None = None,
) -> IngestResult:
    raw = read_htl(path, polarity_col, text_col, delimiter)
    texts, labels = [], []
    dropped_neutral = dropped_empty = 0
    for rec in raw:
        y = map_htl_label(rec.rating, int(rec.source_id))
        if y is DROPPED:
            dropped_neutral += 1
            continue
        if not rec.text.strip():
            dropped_empty += 1
            continue
        texts.append(rec.text)
        labels.append(y)
    raw_neg, raw_pos = labels.count(0), labels.count(1)
    dropped_balance = 0
    if balance:
        keep = balance_classes(labels, seed)
        dropped_balance = len(labels) - len(keep)
        texts = [texts[i] for i in keep]
        labels = [labels[i] for i in keep]
    config = {"dataset": "htl", "balance": balance, "max_len": max_len, "vocab_size": vocab_size,
              "train_fraction": train_fraction, "seed": seed, "polarity_col": polarity_col,
              "text_col": text_col}
    sha = file_sha256(path)
    corpus = assemble("htl", texts, labels, max_len=max_len, vocab_size=vocab_size,
                      train_fraction=train_fraction, seed=seed,
                      provenance={"dataset": "htl", "config_hash": config_hash(config), "file_sha256": sha})
    neg, pos = corpus.class_counts()
    counts = {"read": len(raw), "positive": raw_pos, "negative": raw_neg,
              "dropped_neutral": dropped_neutral, "dropped_empty": dropped_empty,
              "dropped_balance": dropped_balance, "kept": len(corpus),
              "kept_positive": pos, "kept_negative": neg,
              "train": len(corpus.train_idx), "test": len(corpus.test_idx)}
    expected = dict(HTL_EXPECTED) if balance else {k: HTL_EXPECTED[k] for k in ("positive", "negative")}
    manifest = {"dataset": "htl", "input": str(path), "file_sha256": sha, "config": config,
                "counts": counts, "expected_mismatch": _check_expected("HTL", counts, expected)}
    return IngestResult(corpus, manifest)


# -- on-disk corpus ---------------------------------------------------------------

DOCS_FILE = "documents.tsv"
VOCAB_FILE = "vocab.txt"
MANIFEST_FILE = "ingest_manifest.json"


def save_corpus(directory: str | Path, result: IngestResult) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    c = result.corpus
    split_of = np.empty(len(c), dtype=object)
    split_of[c.train_idx] = "train"
    split_of[c.test_idx] = "test"
    with open(d / DOCS_FILE, "w", encoding="utf-8", newline="") as fh:
        fh.write("id\tlabel\tsplit\ttext\n")
        for i, (text, y) in enumerate(zip(c.texts, c.labels)):
            fh.write(f"{i}\t{int(y)}\t{split_of[i]}\t{text}\n")
    c.vocabulary.save(d / VOCAB_FILE)
    manifest = dict(result.manifest)
    manifest.update({
        "max_len": c.max_len,
        "vocab_size": c.vocabulary.max_size,
        "vocab_sha256": c.vocabulary.digest(),
        "provenance": c.provenance,
    })
    (d / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                                   encoding="utf-8")


def load_corpus(directory: str | Path) -> LabeledCorpus:
    d = Path(directory)
    if not (d / MANIFEST_FILE).exists():
        raise DataError(f"{d}: not a prepared corpus directory (no {MANIFEST_FILE})")
    manifest = json.loads((d / MANIFEST_FILE).read_text(encoding="utf-8"))
    vocab = Vocabulary.load(d / VOCAB_FILE, max_size=manifest["vocab_size"])
    if vocab.digest() != manifest["vocab_sha256"]:
        raise DataError(f"{d}: vocabulary file does not match its manifest")
    texts, labels, train, test = [], [], [], []
    with open(d / DOCS_FILE, encoding="utf-8", newline="") as fh:
        next(fh)
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t", 3)
            if len(parts) != 4:
                raise MalformedRecordError("expected id, label, split, text", lineno)
            i, y, part, text = parts
            (train if part == "train" else test).append(int(i))
            texts.append(text)
            labels.append(int(y))
    max_len = manifest["max_len"]
    seqs = np.array([encode_and_pad(t.split(), vocab, max_len).indices for t in texts], dtype=np.int64)
    return LabeledCorpus(
        dataset=manifest["dataset"],
        texts=tuple(texts),
        labels=np.asarray(labels, dtype=np.int64),
        sequences=seqs.reshape(len(texts), max_len),
        vocabulary=vocab,
        train_idx=np.asarray(train, dtype=np.int64),
        test_idx=np.asarray(test, dtype=np.int64),
        provenance=manifest.get("provenance", {}),
    )

