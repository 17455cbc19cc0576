import csv
import json
from pathlib import Path

import pytest

from arsent import cli
from arsent.corpus import load_corpus
from arsent.errors import ConfigError
from arsent.synthetic import SyntheticConfig, write_htl_file

SMALL = SyntheticConfig(n_positive=150, n_negative=70, n_neutral=20, filler_vocab=300, median_length=10)
TINY_CONFIG = """\
# tiny model for fast end-to-end runs
embed_dim = 8
hidden = 4
filters = 4
dense_sizes = 8, 4, 4, 1
batch = 16
epochs = 2
lime_num_samples = 60
lime_top_k = 5
"""
HEADER = ("model,setup,train_acc,precision_0,recall_0,f1_0,precision_1,recall_1,f1_1,"
          "test_acc,overfit_percent\n")


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="session")
def raw_file(tmp_path_factory):
    return write_htl_file(tmp_path_factory.mktemp("raw") / "htl.tsv", SMALL)


def prepare(raw, out, *extra):
    assert run("prepare", "--dataset", "htl", "--input", raw, "--out", out, "--balance",
               "--max-len", 12, "--vocab-size", 150, *extra) == 0
    return out


def write_config(path, corpus, out, extra=""):
    path.write_text(TINY_CONFIG + f"corpus = {corpus}\nout = {out}\n" + extra, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def trained(raw_file, tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    corpus = prepare(raw_file, root / "corpus")
    cfg = write_config(root / "run.cfg", corpus, root / "model")
    assert run("train", "--config", cfg) == 0
    return root, corpus, cfg, root / "model" / cli.CHECKPOINT_FILE


class TestConfig:
    def test_parse(self):
        v = cli.parse_config("# header\nepochs = 3  # inline\n\nseed=7\n")
        assert v == {"epochs": "3", "seed": "7"}

    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigError, match="colour, epoch"):
            cli.parse_config("epoch = 3\ncolour = red\n")

    def test_duplicate_and_malformed(self):
        with pytest.raises(ConfigError, match="duplicate"):
            cli.parse_config("seed = 1\nseed = 2\n")
        with pytest.raises(ConfigError, match=":1:"):
            cli.parse_config("seed 1\n")

    def test_tuple_and_type_coercion(self):
        spec = cli.resolve_spec({"dense_sizes": "16, 8,1", "learning_rate": "0.01"}, {})
        assert spec.dense_sizes == (16, 8, 1) and spec.learning_rate == 0.01
        with pytest.raises(ConfigError):
            cli.resolve_spec({"epochs": "ten"}, {})

    def test_precedence(self, monkeypatch, trained):
        corpus = load_corpus(trained[1])
        monkeypatch.delenv(cli.SEED_ENV, raising=False)
        assert cli.resolve_spec({}, {}).seed == 0
        assert cli.resolve_spec({}, {}, corpus).max_len == 12
        assert cli.resolve_spec({"max_len": "20"}, {}, corpus).max_len == 20
        assert cli.resolve_spec({"seed": "4"}, {}).seed == 4
        monkeypatch.setenv(cli.SEED_ENV, "5")
        assert cli.resolve_spec({"seed": "4"}, {}).seed == 5
        assert cli.resolve_spec({"seed": "4"}, {"seed": 6}).seed == 6
        assert cli.resolve_lime({"lime_top_k": "3"}, {"top_k": None}).top_k == 3
        assert cli.resolve_lime({"lime_top_k": "3"}, {"top_k": 4}).seed == 5

    def test_bad_env_seed(self, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.SEED_ENV, "abc")
        assert run("synth", "--out", tmp_path / "x.tsv") == 1


class TestExitCodes:
    def test_no_command(self, capsys):
        assert run() == 1

    def test_missing_required_flag(self):
        assert run("evaluate", "--checkpoint", "x") == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("corpus = c\nout = o\nlayers = 3\n")
        assert run("train", "--config", cfg) == 1
        assert "unknown config keys: layers" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run("train", "--config", tmp_path / "none.cfg") == 1

    def test_missing_dataset(self, tmp_path):
        assert run("prepare", "--dataset", "htl", "--input", tmp_path / "none.tsv", "--out", tmp_path) == 2

    def test_missing_corpus_dir(self, tmp_path):
        cfg = write_config(tmp_path / "c.cfg", tmp_path / "nothing", tmp_path / "out")
        assert run("train", "--config", cfg) == 2

    def test_balance_rejected_for_labr(self, tmp_path, raw_file):
        assert run("prepare", "--dataset", "labr", "--input", raw_file, "--out", tmp_path, "--balance") == 1

    def test_missing_checkpoint(self, tmp_path):
        assert run("explain", "--checkpoint", tmp_path / "no.ckpt", "--text", "جيد", "--out", tmp_path) == 2

    def test_empty_review(self, trained, tmp_path):
        assert run("explain", "--checkpoint", trained[3], "--text", "!!! ...", "--out", tmp_path) == 2

    def test_id_needs_corpus(self, trained, tmp_path):
        assert run("explain", "--checkpoint", trained[3], "--id", 0, "--out", tmp_path) == 1

    def test_id_out_of_range(self, trained, tmp_path):
        assert run("explain", "--checkpoint", trained[3], "--id", 10**6, "--corpus", trained[1],
                   "--out", tmp_path) == 2


class TestPipeline:
    def test_prepare_outputs(self, trained):
        corpus = trained[1]
        for name in ("documents.tsv", "vocab.txt", "ingest_manifest.json", "prepare.manifest.json"):
            assert (corpus / name).is_file()
        c = load_corpus(corpus)
        neg, pos = c.class_counts()
        assert neg == pos == 70 and c.max_len == 12

    def test_train_artifacts(self, trained):
        model = trained[3].parent
        assert (model / cli.TRACE_FILE).is_file()
        manifest = json.loads((model / "train.manifest.json").read_text())
        assert manifest["command"] == "train" and manifest["checkpoint"].endswith(cli.CHECKPOINT_FILE)
        assert manifest["config"]["epochs"] == 2 and manifest["config"]["max_len"] == 12

    def test_evaluate(self, trained, tmp_path, capsys):
        assert run("evaluate", "--checkpoint", trained[3], "--corpus", trained[1], "--out", tmp_path) == 0
        record = json.loads((tmp_path / "evaluation.json").read_text())
        assert record["model"] == "CNN-BiLSTM" and 0 <= record["test_accuracy"] <= 1
        assert (tmp_path / "evaluation.csv").read_text().startswith(HEADER)
        assert (tmp_path / "evaluate.manifest.json").is_file()
        assert "CNN-BiLSTM" in capsys.readouterr().out

    def test_evaluate_vocab_mismatch(self, trained, raw_file, tmp_path, capsys):
        other = prepare(raw_file, tmp_path / "other", "--seed", 3)
        assert run("evaluate", "--checkpoint", trained[3], "--corpus", other) == 2
        assert "vocabulary mismatch" in capsys.readouterr().err

    def test_explain(self, trained, tmp_path, capsys):
        assert run("explain", "--checkpoint", trained[3], "--id", 0, "--corpus", trained[1],
                   "--config", trained[2], "--out", tmp_path) == 0
        exp = json.loads((tmp_path / "explanation.json").read_text(encoding="utf-8"))
        assert exp["review_id"] == "0" and exp["config"]["num_samples"] == 60
        assert 1 <= len(exp["token_weights"]) <= 5
        assert sum(exp["predicted_probabilities"]) == pytest.approx(1.0)
        assert (tmp_path / "explanation.html").read_text(encoding="utf-8").startswith("<!DOCTYPE html>")
        assert (tmp_path / "explanation.txt").is_file() and (tmp_path / "explain.manifest.json").is_file()
        assert "token weights" in capsys.readouterr().out

    def test_explain_flag_overrides_config(self, trained, tmp_path):
        assert run("explain", "--checkpoint", trained[3], "--text", "الفندق جيد جدا", "--config", trained[2],
                   "--top-k", 2, "--out", tmp_path) == 0
        exp = json.loads((tmp_path / "explanation.json").read_text(encoding="utf-8"))
        assert exp["config"]["top_k"] == 2 and len(exp["token_weights"]) == 2

    def test_train_rerun_same_spec_is_identical(self, trained):
        before = trained[3].read_bytes()
        assert run("train", "--config", trained[2]) == 0
        assert trained[3].read_bytes() == before

    def test_train_refuses_mismatched_spec(self, trained, capsys):
        before = trained[3].read_bytes()
        assert run("train", "--config", trained[2], "--epochs", 1) == 1
        assert "epochs" in capsys.readouterr().err
        assert trained[3].read_bytes() == before

    def test_train_force(self, raw_file, tmp_path):
        corpus = prepare(raw_file, tmp_path / "corpus")
        cfg = write_config(tmp_path / "c.cfg", corpus, tmp_path / "m")
        assert run("train", "--config", cfg, "--epochs", 0) == 0
        assert run("train", "--config", cfg, "--epochs", 1) == 1
        assert run("train", "--config", cfg, "--epochs", 1, "--force") == 0

    def test_experiment_only(self, trained, tmp_path):
        assert run("experiment", "--config", trained[2], "--out", tmp_path, "--only", "BiLSTM:N") == 0
        rows = list(csv.reader((tmp_path / cli.RESULTS_CSV).open()))
        assert len(rows) == 2 and rows[1][:2] == ["BiLSTM", "N"]
        assert (tmp_path / "BiLSTM_N" / cli.CHECKPOINT_FILE).is_file()
        assert (tmp_path / cli.RESULTS_TABLE).is_file()

    def test_experiment_bad_filter(self, trained, tmp_path):
        assert run("experiment", "--config", trained[2], "--out", tmp_path, "--only", "GRU:ND") == 1

    def test_experiment_all_six(self, trained, tmp_path):
        assert run("experiment", "--config", trained[2], "--out", tmp_path, "--epochs", 1) == 0
        rows = list(csv.reader((tmp_path / cli.RESULTS_CSV).open()))
        assert [tuple(r[:2]) for r in rows[1:]] == [
            (a, s) for a in ("BiLSTM", "CNN-BiLSTM") for s in ("ND", "N", "D")
        ]


def test_csv_header_golden(tmp_path):
    cli.write_results_csv(tmp_path / "r.csv", [])
    assert (tmp_path / "r.csv").read_text() == HEADER
    assert ",".join(cli.CSV_HEADER) + "\n" == HEADER


def end_to_end(raw, root: Path) -> dict[str, bytes]:
    """prepare -> train -> evaluate -> explain -> experiment; returns the record files."""
    corpus = prepare(raw, root / "corpus", "--seed", 11)
    cfg = write_config(root / "run.cfg", corpus, root / "model", "seed = 11\n")
    assert run("train", "--config", cfg) == 0
    ckpt = root / "model" / cli.CHECKPOINT_FILE
    assert run("evaluate", "--checkpoint", ckpt, "--corpus", corpus) == 0
    assert run("explain", "--checkpoint", ckpt, "--id", 3, "--corpus", corpus, "--config", cfg,
               "--out", root / "exp") == 0
    assert run("experiment", "--config", cfg, "--out", root / "matrix", "--only", "BiLSTM:ND",
               "--epochs", 1) == 0
    files = ["corpus/documents.tsv", "corpus/vocab.txt", "model/model.ckpt", "model/trace.csv",
             "model/evaluation.csv", "model/evaluation.json", "exp/explanation.json", "exp/explanation.html",
             "exp/explanation.txt", "matrix/results.csv"]
    return {f: (root / f).read_bytes() for f in files}


def test_end_to_end_determinism(raw_file, tmp_path, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    a = end_to_end(raw_file, tmp_path / "a")
    b = end_to_end(raw_file, tmp_path / "b")
    assert [f for f in a if a[f] != b[f]] == []
