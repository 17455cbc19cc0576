"""Arabic review text to fixed-length index sequences.

normalize -> tokenize -> build_vocabulary -> encode_and_pad. Index 0 is
reserved for padding and index 1 for out-of-vocabulary tokens; real tokens
start at 2.
"""
from __future__ import annotations

import hashlib
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD_INDEX = 0
OOV_INDEX = 1
FIRST_TOKEN_INDEX = 2

_ARABIC_RANGES = [
    (0x0600, 0x06FF),
    (0x0750, 0x077F),
    (0x08A0, 0x08FF),
    (0xFB50, 0xFDFF),
    (0xFE70, 0xFEFF),
]
_TATWEEL = "ـ"


def _char_classes() -> tuple[str, str]:
    letters, marks = [], [_TATWEEL]
    for lo, hi in _ARABIC_RANGES:
        for cp in range(lo, hi + 1):
            ch = chr(cp)
            cat = unicodedata.category(ch)
            if cat == "Lo":
                letters.append(ch)
            elif cat in ("Mn", "Me"):
                marks.append(ch)
    digits = "0123456789" + "".join(chr(c) for c in range(0x0660, 0x066A))
    digits += "".join(chr(c) for c in range(0x06F0, 0x06FA))
    return "".join(letters) + digits, "".join(marks)


_KEEP, _MARKS = _char_classes()
_MARKS_RE = re.compile("[" + re.escape(_MARKS) + "]")
_OTHER_RE = re.compile("[^" + re.escape(_KEEP) + "]+")


def normalize(text: str) -> str:
    """Keep Arabic letters and digits, everything else becomes a separator.

    Diacritics and tatweel are deleted outright so that vocalized words stay
    in one piece; any other character is replaced by a space.
    """
    text = _MARKS_RE.sub("", text)
    text = _OTHER_RE.sub(" ", text)
    return text.strip()


def tokenize(text: str) -> list[str]:
    return [tok for tok in text.split(" ") if tok]


def preprocess(text: str) -> list[str]:
    return tokenize(normalize(text))


@dataclass(frozen=True)
class Vocabulary:
    token_to_index: dict[str, int]
    max_size: int
    pad_index: int = PAD_INDEX
    oov_index: int = OOV_INDEX
    _tokens: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.token_to_index) > self.max_size:
            raise ValueError(
                f"vocabulary holds {len(self.token_to_index)} tokens, max_size is {self.max_size}"
            )
        ordered = sorted(self.token_to_index.items(), key=lambda kv: kv[1])
        expected = list(range(FIRST_TOKEN_INDEX, FIRST_TOKEN_INDEX + len(ordered)))
        if [i for _, i in ordered] != expected:
            raise ValueError("token indices must be contiguous starting at 2")
        object.__setattr__(self, "_tokens", tuple(t for t, _ in ordered))

    def __len__(self) -> int:
        return len(self.token_to_index)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    @property
    def table_size(self) -> int:
        """Rows needed in an embedding table: max_size tokens plus pad and OOV."""
        return self.max_size + FIRST_TOKEN_INDEX

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, self.oov_index)

    def token(self, index: int) -> str | None:
        if index < FIRST_TOKEN_INDEX or index - FIRST_TOKEN_INDEX >= len(self._tokens):
            return None
        return self._tokens[index - FIRST_TOKEN_INDEX]

    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def to_text(self) -> str:
        return "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self._tokens, FIRST_TOKEN_INDEX))

    def digest(self) -> str:
        payload = f"max_size={self.max_size}\n" + self.to_text()
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, max_size: int | None = None) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), max_size=max_size)

    @classmethod
    def from_text(cls, text: str, max_size: int | None = None) -> "Vocabulary":
        mapping: dict[str, int] = {}
        seen: set[int] = set()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            try:
                tok, idx_s = line.rsplit("\t", 1)
                idx = int(idx_s)
            except ValueError:
                raise ValueError(f"line {lineno}: expected '<token>\\t<index>'") from None
            if idx in seen:
                raise ValueError(f"line {lineno}: duplicate index {idx}")
            if tok in mapping:
                raise ValueError(f"line {lineno}: duplicate token {tok!r}")
            seen.add(idx)
            mapping[tok] = idx
        return cls(mapping, max_size if max_size is not None else len(mapping))


def build_vocabulary(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Rank tokens by frequency (ties: first occurrence) and keep the top max_size."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(doc)
    # Counter preserves insertion order, so a stable sort breaks ties by first occurrence
    ranked = sorted(counts, key=lambda tok: -counts[tok])[:max_size]
    return Vocabulary({tok: i for i, tok in enumerate(ranked, FIRST_TOKEN_INDEX)}, max_size)


@dataclass(frozen=True)
class EncodedSequence:
    indices: tuple[int, ...]
    original_token_count: int

    def __len__(self) -> int:
        return len(self.indices)


def encode_and_pad(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> EncodedSequence:
    """Map tokens to indices, keep the last max_len, left-pad with pad_index."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab.index(t) for t in tokens][-max_len:]
    ids = [vocab.pad_index] * (max_len - len(ids)) + ids
    return EncodedSequence(tuple(ids), len(tokens))
