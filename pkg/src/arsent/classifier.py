"""Text-in, probability-out wrapper around a trained network."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from arsent.errors import DataError
from arsent.nn.network import Network
from arsent.text import Vocabulary, encode_and_pad, preprocess


@dataclass
class TextClassifier:
    """Callable black box: ``clf(texts)`` returns class-1 probabilities."""

    network: Network
    vocabulary: Vocabulary
    max_len: int
    batch_size: int = 256

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        rows = [encode_and_pad(preprocess(t), self.vocabulary, self.max_len).indices for t in texts]
        return np.asarray(rows, dtype=np.int64).reshape(len(rows), self.max_len)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.network.predict_proba(self.encode(texts), self.batch_size)

    __call__ = predict_proba

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "TextClassifier":
        """Needs a checkpoint whose metadata embeds the vocabulary."""
        from arsent.training import load_model

        net, spec, meta = load_model(path)
        if "vocabulary" not in meta:
            raise DataError(f"{path}: checkpoint carries no vocabulary")
        vocab = Vocabulary.from_text(meta["vocabulary"], max_size=spec.vocab_size)
        if "vocab_sha256" in meta and vocab.digest() != meta["vocab_sha256"]:
            raise DataError(f"{path}: embedded vocabulary does not match its recorded hash")
        return cls(net, vocab, spec.max_len)
