"""Acceptance suite: one test per criterion, summarised by conftest.

Long desk-scale runs (criteria 4 and 5) train the CNN-BiLSTM for 10 epochs on
the balanced synthetic hotel corpus at max_len 64; each run takes a few
minutes on one CPU. Criteria needing the real corpora read their paths from
ARSENT_LABR_PATH / ARSENT_HTL_PATH and are skipped as external otherwise.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from arsent.classifier import TextClassifier
from arsent.corpus import HTL_EXPECTED, LABR_EXPECTED, file_sha256, ingest_htl, ingest_labr
from arsent.lime import LimeConfig, explain, fit_surrogate, proximity
from arsent.nn.layers import BiLSTM, Conv1D, Dense, Embedding, GlobalMaxPool
from arsent.synthetic import SyntheticConfig, write_htl_file
from arsent.training import EvalReport, ModelSpec, class_metrics, evaluate, overfit_percent, train

from helpers import tiny_spec
from test_cli import end_to_end
from test_lime import all_masks, ridge_oracle
from test_nn import GRAD_TOL, _check_layer, _network_grad_errors

DESK_SEEDS = (0, 1, 2, 3, 4)
DESK_MAX_LEN = 64
EXTERNAL = "external:"


def criterion(cid, title):
    return pytest.mark.criterion(cid, title)


# -- desk-scale runs, shared between criteria ----------------------------------------

class DeskRuns:
    """Lazily trained CNN-BiLSTM runs on the balanced synthetic corpus, cached per (setup, seed)."""

    def __init__(self, workdir: Path):
        raw = write_htl_file(workdir / "htl_synthetic.tsv", SyntheticConfig(seed=0))
        self.corpus = ingest_htl(raw, balance=True, max_len=DESK_MAX_LEN, seed=0).corpus
        self.runs: dict[tuple[str, int], tuple[EvalReport, float, object]] = {}

    def get(self, setup: str, seed: int):
        key = (setup, seed)
        if key not in self.runs:
            spec = ModelSpec(architecture="CNN-BiLSTM", setup=setup, max_len=DESK_MAX_LEN,
                             vocab_size=self.corpus.vocabulary.max_size, epochs=10, seed=seed)
            t0 = time.perf_counter()
            net = train(spec, self.corpus).network
            seconds = time.perf_counter() - t0
            self.runs[key] = (evaluate(net, self.corpus), seconds, net)
        return self.runs[key]


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    return DeskRuns(tmp_path_factory.mktemp("desk"))


# -- 1 -----------------------------------------------------------------------------

@criterion(1, "gradient correctness")
def test_gradient_correctness(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    errors = {
        "embedding": _check_layer(Embedding("e", 7, 8, rng), np.array([[1, 2, 2, 6, 0, 3]]), wrt_input=False),
        "conv1d": _check_layer(Conv1D("c", 8, 4, 3, rng), rng.normal(size=(2, 6, 8))),
        "bilstm": _check_layer(BiLSTM("l", 8, 3, rng), rng.normal(size=(2, 6, 8))),
        "max_pool": _check_layer(GlobalMaxPool("p"), rng.normal(size=(2, 6, 5))),
        **{f"dense_{act}": _check_layer(Dense("d", 5, 4, act, rng), rng.normal(size=(3, 5)))
           for act in ("relu", "sigmoid", "none")},
        "network": _network_grad_errors(tiny_spec(architecture="CNN-BiLSTM", vocab_size=6),
                                        np.array([[0, 2, 3, 4, 5, 2], [1, 7, 6, 3, 3, 2]]), np.array([1.0, 0.0])),
    }
    worst = max((e, f"{layer}.{k}") for layer, errs in errors.items() for k, e in errs.items())
    seconds = time.perf_counter() - t0
    record_property("detail", f"max relative error {worst[0]:.2e} ({worst[1]}), {seconds:.1f} s")
    assert worst[0] < GRAD_TOL
    assert seconds < 60


# -- 2 -----------------------------------------------------------------------------

@criterion(2, "LIME oracle equivalence")
def test_lime_oracle(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(1, 11):
        rng = np.random.default_rng(n)
        z = all_masks(n)
        y = rng.uniform(size=len(z))
        w = proximity(np.ones(n), z, 25.0)
        exp = fit_surrogate(z, y, w, LimeConfig(ridge_penalty=1.0, top_k=n), [str(i) for i in range(n)])
        beta, b0 = ridge_oracle(z, y, w, 1.0)
        got = np.array([exp.weight_of(str(i)) for i in range(n)])
        worst = max(worst, float(np.abs(got - beta).max()), abs(exp.intercept - b0))
    recovered = []
    for n in range(1, 11):
        z = all_masks(n)
        exp = fit_surrogate(z, 0.1 + 0.3 * z[:, 0], proximity(np.ones(n), z, 25.0),
                            LimeConfig(ridge_penalty=1e-8, top_k=n), [str(i) for i in range(n)])
        recovered.append(exp.weight_of("0"))
    dev = max(abs(r - 0.3) for r in recovered)
    seconds = time.perf_counter() - t0
    record_property("detail", f"max |surrogate - oracle| {worst:.1e}, linear coefficient 0.3 +- {dev:.1e}, "
                              f"{seconds:.1f} s")
    assert worst < 1e-9
    assert dev < 1e-3
    assert seconds < 30


# -- 3 -----------------------------------------------------------------------------

def _external_file(var: str) -> Path:
    path = os.environ.get(var)
    if not path or not Path(path).is_file():
        pytest.skip(f"{EXTERNAL} {var} does not point to the archive file")
    pinned = os.environ.get(var.replace("_PATH", "_SHA256"))
    if pinned and file_sha256(path) != pinned:
        pytest.skip(f"{EXTERNAL} {path} does not match the pinned sha256")
    return Path(path)


@criterion("3a", "LABR golden counts")
def test_labr_golden_counts(record_property):
    counts = ingest_labr(_external_file("ARSENT_LABR_PATH")).manifest["counts"]
    record_property("detail", ", ".join(f"{k} {counts[k]}" for k in LABR_EXPECTED))
    assert {k: counts[k] for k in LABR_EXPECTED} == LABR_EXPECTED


@criterion("3b", "HTL golden counts")
def test_htl_golden_counts(record_property):
    counts = ingest_htl(_external_file("ARSENT_HTL_PATH"), balance=True).manifest["counts"]
    record_property("detail", f"kept {counts['kept_negative']}+{counts['kept_positive']}, "
                              f"split {counts['train']}/{counts['test']}")
    assert (counts["kept_negative"], counts["kept_positive"]) == (HTL_EXPECTED["negative"],) * 2
    assert (counts["train"], counts["test"]) == (HTL_EXPECTED["train"], HTL_EXPECTED["test"])


# -- 4 -----------------------------------------------------------------------------

@pytest.mark.slow
@criterion(4, "desk-scale training")
def test_desk_scale_training(desk, record_property):
    rep, seconds, _ = desk.get("ND", 0)
    record_property("detail", f"CNN-BiLSTM ND seed 0: train {rep.train_accuracy:.4f}, test "
                              f"{rep.test_accuracy:.4f} (reference 0.9478), {seconds:.0f} s")
    assert rep.test_accuracy >= 0.85
    assert seconds <= 45 * 60


# -- 5 -----------------------------------------------------------------------------

@pytest.mark.slow
@criterion(5, "noise-layer effect")
def test_noise_layer_effect(desk, record_property):
    nd = [desk.get("ND", s)[0].overfit_percent for s in DESK_SEEDS]
    d = [desk.get("D", s)[0].overfit_percent for s in DESK_SEEDS]
    wins = sum(a < b for a, b in zip(nd, d))
    record_property("detail", "overfit ND " + "/".join(f"{v:.2f}" for v in nd)
                    + " vs D " + "/".join(f"{v:.2f}" for v in d)
                    + f"; means {np.mean(nd):.2f} vs {np.mean(d):.2f} (delta {np.mean(d) - np.mean(nd):+.2f}, "
                      f"reference +2.88); ND lower in {wins}/5 seeds")
    assert np.mean(nd) < np.mean(d)
    assert wins >= 3


# -- 6 -----------------------------------------------------------------------------

@criterion(6, "metric arithmetic")
def test_metric_arithmetic(record_property):
    overfit = overfit_percent(0.9985, 0.9478)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(2000):
        cm = rng.integers(1, 10_000, size=(2, 2))
        for cls in (0, 1):
            p, r, f1 = class_metrics(cm, cls)
            worst = max(worst, abs(f1 - 2 * p * r / (p + r)))
    record_property("detail", f"overfit {overfit:.2f}, F1 vs harmonic mean max deviation {worst:.1e}")
    assert round(overfit, 2) == 5.07
    assert worst < 1e-9


# -- 7 -----------------------------------------------------------------------------

@criterion(7, "determinism")
def test_determinism(tmp_path, monkeypatch, record_property):
    monkeypatch.delenv("ARSENT_SEED", raising=False)
    from test_cli import SMALL

    raw = write_htl_file(tmp_path / "htl.tsv", SMALL)
    a = end_to_end(raw, tmp_path / "a")
    b = end_to_end(raw, tmp_path / "b")
    differing = [f for f in a if a[f] != b[f]]
    record_property("detail", f"{len(a) - len(differing)}/{len(a)} artifacts byte-identical"
                    + (f"; differing: {', '.join(differing)}" if differing else ""))
    assert differing == []


# -- 8 -----------------------------------------------------------------------------

@pytest.mark.slow
@criterion(8, "full-scale LABR (informational)")
def test_full_scale_labr(record_property):
    path = _external_file("ARSENT_LABR_PATH")
    if os.environ.get("ARSENT_LABR_FULL") != "1":
        pytest.skip(f"{EXTERNAL} set ARSENT_LABR_FULL=1 to run the full-scale LABR job (hours on one CPU)")
    corpus = ingest_labr(path).corpus
    spec = ModelSpec(architecture="BiLSTM", setup="ND", max_len=corpus.max_len,
                     vocab_size=corpus.vocabulary.max_size, seed=0)
    rep = evaluate(train(spec, corpus).network, corpus)
    inside = abs(rep.test_accuracy - 0.88) <= 0.03 and abs(rep.precision[0] - 0.62) <= 0.03
    record_property("detail", f"BiLSTM ND: test {rep.test_accuracy:.4f} (reference 0.88), class-0 precision "
                              f"{rep.precision[0]:.4f} (reference 0.62); "
                              f"{'within' if inside else 'outside'} the 3-point band, not gated")


# -- explanation direction -------------------------------------------------------------

# Own review, written to contain the two praise words under test.
HOTEL_REVIEW = "الاقامه في الفندق كانت جيد و العاملون مساعدون جدا و المسبح نظيف"


@pytest.mark.slow
@criterion("E", "explanation direction")
def test_explanation_direction(desk, record_property):
    _, _, net = desk.get("ND", 0)
    clf = TextClassifier(net, desk.corpus.vocabulary, DESK_MAX_LEN)
    exp = explain(HOTEL_REVIEW, clf, LimeConfig(seed=0))
    good, helpful = exp.weight_of("جيد"), exp.weight_of("مساعدون")
    record_property("detail", f"P(positive) {exp.predicted_probabilities[1]:.3f}, w(جيد) {good:+.4f}, "
                              f"w(مساعدون) {helpful:+.4f}, fidelity {exp.local_fidelity:.3f}")
    assert exp.predicted_probabilities[1] > 0.5
    assert good > 0 and helpful > 0
