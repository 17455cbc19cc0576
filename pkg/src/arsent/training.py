"""Model assembly, mini-batch training, evaluation and splitting."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from arsent.errors import ConfigError, DataError, NumericError
from arsent.nn import layers as L
from arsent.nn.network import Network, read_checkpoint, save_checkpoint
from arsent.nn.rng import SeededRng, stream

if TYPE_CHECKING:
    from arsent.corpus import LabeledCorpus

log = logging.getLogger(__name__)

ARCHITECTURES = ("BiLSTM", "CNN-BiLSTM")
SETUPS = ("ND", "N", "D")
LOSS_CLIP = 1e-7
THRESHOLD = 0.5


@dataclass(frozen=True)
class ModelSpec:
    architecture: str = "CNN-BiLSTM"
    setup: str = "ND"
    vocab_size: int = 10000
    embed_dim: int = 100
    max_len: int = 128
    hidden: int = 64
    filters: int = 64
    kernel: int = 3
    dense_sizes: tuple[int, ...] = (128, 64, 32, 1)
    dropout_rate: float = 0.5
    noise_stddev: float = 0.75
    batch: int = 64
    epochs: int = 10
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.setup not in SETUPS:
            raise ConfigError(f"setup must be one of {SETUPS}, got {self.setup!r}")
        object.__setattr__(self, "dense_sizes", tuple(int(s) for s in self.dense_sizes))
        if not self.dense_sizes or self.dense_sizes[-1] != 1:
            raise ConfigError("dense_sizes must end with the single output unit")
        for name in ("vocab_size", "embed_dim", "max_len", "hidden", "filters", "kernel", "batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.noise_stddev < 0:
            raise ConfigError("noise_stddev must be >= 0")
        if self.architecture == "CNN-BiLSTM" and self.max_len < self.kernel:
            raise ConfigError("max_len must be at least the convolution kernel size")

    @property
    def label(self) -> str:
        return f"{self.architecture}:{self.setup}"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dense_sizes"] = list(self.dense_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown ModelSpec fields: {sorted(unknown)}")
        return cls(**d)


def build_network(spec: ModelSpec, rng: np.random.Generator) -> Network:
    layers: list[L.Layer] = [L.Embedding("embedding", spec.vocab_size + 2, spec.embed_dim, rng)]
    width = spec.embed_dim
    if spec.architecture == "CNN-BiLSTM":
        layers.append(L.Conv1D("conv1d", width, spec.filters, spec.kernel, rng))
        width = spec.filters
    layers.append(L.BiLSTM("bilstm", width, spec.hidden, rng))
    layers.append(L.GlobalMaxPool("max_pool"))
    width = 2 * spec.hidden
    hidden_sizes = spec.dense_sizes[:-1]
    for i, size in enumerate(hidden_sizes):
        layers.append(L.Dense(f"dense_{i}", width, size, "relu", rng))
        width = size
        if i < len(hidden_sizes) - 1:
            layers.append(L.Dropout(f"dropout_{i}", spec.dropout_rate))
    # the block in front of the output unit is what the three setups vary
    if spec.setup in ("ND", "D"):
        layers.append(L.Dropout("dropout_out", spec.dropout_rate))
    if spec.setup in ("ND", "N"):
        layers.append(L.GaussianNoise("noise", spec.noise_stddev))
    layers.append(L.Dense("output", width, 1, "sigmoid", rng))
    return Network(layers)


# -- loss -----------------------------------------------------------------------

def bce_loss(p, y) -> float:
    """Mean binary cross-entropy with probabilities clipped away from 0 and 1."""
    p = np.clip(np.asarray(p, dtype=np.float64), LOSS_CLIP, 1.0 - LOSS_CLIP)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_logit_grad(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d(mean BCE)/d(logit) for a sigmoid output."""
    return (p - y) / len(p)


# -- Adam -------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    A tensor whose gradient is identically zero counts as having received no
    gradient this step: its value and moments are left as they are, so a
    zero-gradient step is the identity on parameters whatever the history.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericError(f"non-finite gradient in {name}: {bad} of {np.size(g)} entries")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if not g.any():
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float


@dataclass
class TrainResult:
    network: Network
    spec: ModelSpec
    trace: list[EpochRecord]


TRACE_HEADER = ("epoch", "train_loss", "train_acc")


def write_trace(path: str | Path, trace: Iterable[EpochRecord], append: bool = False) -> None:
    path = Path(path)
    fresh = not append or not path.exists()
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow([r.epoch, f"{r.train_loss:.10f}", f"{r.train_acc:.10f}"])


def train(
    spec: ModelSpec,
    corpus: "LabeledCorpus",
    checkpoint_path: str | Path | None = None,
    trace_path: str | Path | None = None,
    checkpoint_meta: dict | None = None,
) -> TrainResult:
    """Run ``spec.epochs`` shuffled passes of mini-batch Adam over the training split.

    After each epoch the full training split is re-scored in inference mode
    and the loss and accuracy recorded in the trace.
    """
    train_idx = np.asarray(corpus.train_idx)
    if len(train_idx) == 0:
        raise ConfigError("training split is empty")
    if corpus.sequences.shape[1] != spec.max_len:
        raise ConfigError(f"corpus max_len {corpus.sequences.shape[1]} != spec max_len {spec.max_len}")
    if corpus.vocabulary.max_size != spec.vocab_size:
        raise ConfigError(
            f"corpus vocabulary size {corpus.vocabulary.max_size} != spec vocab_size {spec.vocab_size}"
        )
    rng = SeededRng(spec.seed)
    net = build_network(spec, rng.init)
    state = AdamState(learning_rate=spec.learning_rate)
    x_all, y_all = corpus.sequences, corpus.labels.astype(np.float64)
    trace: list[EpochRecord] = []
    for epoch in range(1, spec.epochs + 1):
        order = rng.shuffle.permutation(train_idx)
        for start in range(0, len(order), spec.batch):
            batch = order[start:start + spec.batch]
            p = net.forward(x_all[batch], "train", rng)
            net.backward(bce_logit_grad(p, y_all[batch]), wrt="logits")
            params, grads = {}, {}
            for name, value, grad in net.parameters():
                params[name], grads[name] = value, grad
            adam_step(params, grads, state)
        p = net.predict_proba(x_all[train_idx])
        rec = EpochRecord(epoch, bce_loss(p, y_all[train_idx]), accuracy(y_all[train_idx], predict_labels(p)))
        log.info("%s epoch %d: loss %.4f acc %.4f", spec.label, epoch, rec.train_loss, rec.train_acc)
        trace.append(rec)
    if trace_path is not None:
        write_trace(trace_path, trace)
    if checkpoint_path is not None:
        save_model(checkpoint_path, net, spec, checkpoint_meta or {})
    return TrainResult(net, spec, trace)


def save_model(path: str | Path, net: Network, spec: ModelSpec, meta: dict) -> None:
    save_checkpoint(path, net, {"spec": spec.to_dict(), "seed": spec.seed, **meta})


def load_model(path: str | Path) -> tuple[Network, ModelSpec, dict]:
    """Rebuild the network described by a checkpoint; shapes must match exactly."""
    header, tensors = read_checkpoint(path)
    meta = header["meta"]
    spec = ModelSpec.from_dict(meta["spec"])
    net = build_network(spec, stream(spec.seed, "init"))
    if [l["name"] for l in header["layers"]] != [l.name for l in net.layers]:
        raise DataError(f"{path}: layer order does not match spec {spec.label}")
    net.load_state(tensors)
    return net, spec, meta


# -- metrics --------------------------------------------------------------------

def predict_labels(p: np.ndarray) -> np.ndarray:
    return (np.asarray(p) >= THRESHOLD).astype(np.int64)


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) == 0:
        return 0.0
    return float(np.mean(y_true == y_pred))


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """2x2 counts, rows = true class, columns = predicted class."""
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def class_metrics(cm: np.ndarray, cls: int) -> tuple[float, float, float]:
    """Precision, recall, F1 for one class; a zero denominator yields 0."""
    tp = cm[cls, cls]
    predicted = cm[:, cls].sum()
    actual = cm[cls, :].sum()
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return float(precision), float(recall), float(f1)


def overfit_percent(train_acc: float, test_acc: float) -> float:
    return (train_acc - test_acc) * 100.0


@dataclass(frozen=True)
class EvalReport:
    train_accuracy: float
    test_accuracy: float
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    confusion: tuple[tuple[int, int], tuple[int, int]]

    @property
    def overfit_percent(self) -> float:
        return overfit_percent(self.train_accuracy, self.test_accuracy)

    @classmethod
    def from_predictions(cls, y_train, pred_train, y_test, pred_test) -> "EvalReport":
        cm = confusion_matrix(y_test, pred_test)
        per_class = [class_metrics(cm, c) for c in (0, 1)]
        return cls(
            train_accuracy=accuracy(y_train, pred_train),
            test_accuracy=accuracy(y_test, pred_test),
            precision=(per_class[0][0], per_class[1][0]),
            recall=(per_class[0][1], per_class[1][1]),
            f1=(per_class[0][2], per_class[1][2]),
            confusion=tuple(tuple(int(v) for v in row) for row in cm),
        )

    def to_dict(self) -> dict:
        return {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "confusion": [list(r) for r in self.confusion],
            "overfit_percent": self.overfit_percent,
        }


def evaluate(network: Network, corpus: "LabeledCorpus") -> EvalReport:
    """Score both splits in inference mode (dropout and noise off)."""
    tr, te = np.asarray(corpus.train_idx), np.asarray(corpus.test_idx)
    pred_tr = predict_labels(network.predict_proba(corpus.sequences[tr]))
    pred_te = predict_labels(network.predict_proba(corpus.sequences[te]))
    return EvalReport.from_predictions(corpus.labels[tr], pred_tr, corpus.labels[te], pred_te)


# -- splitting ------------------------------------------------------------------

def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle then prefix cut; |train| = floor(train_fraction * n)."""
    if n < 2:
        raise DataError(f"need at least 2 documents to split, got {n}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    order = stream(seed, "split").permutation(n)
    cut = math.floor(train_fraction * n)
    return np.sort(order[:cut]), np.sort(order[cut:])


def split(corpus: "LabeledCorpus", train_fraction: float, seed: int) -> "LabeledCorpus":
    tr, te = split_indices(len(corpus.labels), train_fraction, seed)
    return dataclasses.replace(corpus, train_idx=tr, test_idx=te)
