"""Command-line entry point: prepare, train, evaluate, explain, experiment, synth.

Configuration is a flat ``key = value`` file. Resolution order for every
setting is: command-line flag, then the ``ARSENT_SEED`` environment variable
(seed only), then the config file, then values implied by the prepared
corpus (max_len, vocab_size), then built-in defaults.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from arsent import __version__
from arsent.classifier import TextClassifier
from arsent.corpus import (
    DOCS_FILE, MANIFEST_FILE, VOCAB_FILE, LabeledCorpus, file_sha256, ingest_htl, ingest_labr, load_corpus, save_corpus,
)
from arsent.errors import (
    ArsentError, ConfigError, DataError, InputError, NumericError, UsageError,
)
from arsent.lime import LimeConfig, explain
from arsent.report import ExplanationReport, render_html, render_text
from arsent.training import (
    ARCHITECTURES, SETUPS, EvalReport, ModelSpec, evaluate, load_model, save_model, train,
)

log = logging.getLogger("arsent")

SEED_ENV = "ARSENT_SEED"
CHECKPOINT_FILE = "model.ckpt"
TRACE_FILE = "trace.csv"
RESULTS_CSV = "results.csv"
RESULTS_TABLE = "results.txt"
CSV_HEADER = (
    "model", "setup", "train_acc", "precision_0", "recall_0", "f1_0",
    "precision_1", "recall_1", "f1_1", "test_acc", "overfit_percent",
)

_SPEC_FIELDS = {f.name: f for f in dataclasses.fields(ModelSpec)}
_LIME_FIELDS = {f"lime_{f.name}": f for f in dataclasses.fields(LimeConfig) if f.name != "seed"}
CONFIG_KEYS = frozenset({"corpus", "out"} | set(_SPEC_FIELDS) | set(_LIME_FIELDS))


# -- config ------------------------------------------------------------------------

def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are an error."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    unknown = sorted(set(values) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown config keys: {', '.join(unknown)}")
    return values


def load_config(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"), str(p))


def _coerce(name: str, value, ftype) -> object:
    if not isinstance(value, str):
        return value
    try:
        if ftype in (int, "int"):
            return int(value)
        if ftype in (float, "float"):
            return float(value)
        if "tuple" in str(ftype):
            return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r} as {ftype}") from None
    return value


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def resolve_spec(file_values: dict[str, str], flags: dict[str, object],
                 corpus: LabeledCorpus | None = None) -> ModelSpec:
    merged: dict[str, object] = {}
    if corpus is not None:
        merged.update(max_len=corpus.max_len, vocab_size=corpus.vocabulary.max_size)
    merged.update({k: v for k, v in file_values.items() if k in _SPEC_FIELDS})
    seed = env_seed()
    if seed is not None:
        merged["seed"] = seed
    merged.update({k: v for k, v in flags.items() if v is not None})
    return ModelSpec(**{k: _coerce(k, v, _SPEC_FIELDS[k].type) for k, v in merged.items()})


def resolve_lime(file_values: dict[str, str], flags: dict[str, object]) -> LimeConfig:
    kwargs = {k[5:]: _coerce(k, v, _LIME_FIELDS[k].type) for k, v in file_values.items() if k in _LIME_FIELDS}
    seed = env_seed()
    if seed is not None:
        kwargs["seed"] = seed
    kwargs.update({k: v for k, v in flags.items() if v is not None})
    return LimeConfig(**kwargs)


def _setting(name: str, flag, file_values: dict[str, str]) -> str:
    value = flag if flag is not None else file_values.get(name)
    if value is None:
        raise ConfigError(f"missing setting {name!r} (pass --{name} or set it in the config file)")
    return value


# -- run manifest ------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    dataset_sha256: str | None = None
    checkpoint: str | None = None
    artifacts: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None
    version: str = __version__

    def write(self, directory: str | Path) -> Path:
        self.finished = _now()
        path = Path(directory) / f"{self.command}.manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
        return path


def _corpus_digest(corpus_dir: Path) -> str:
    """Hash of the prepared documents and vocabulary, independent of where they live."""
    h = hashlib.sha256()
    for name in (DOCS_FILE, VOCAB_FILE):
        h.update(file_sha256(corpus_dir / name).encode())
    return h.hexdigest()


# -- formatting --------------------------------------------------------------------

def csv_row(spec: ModelSpec, rep: EvalReport) -> list[str]:
    f = lambda x: f"{x:.6f}"  # noqa: E731
    return [
        spec.architecture, spec.setup, f(rep.train_accuracy),
        f(rep.precision[0]), f(rep.recall[0]), f(rep.f1[0]),
        f(rep.precision[1]), f(rep.recall[1]), f(rep.f1[1]),
        f(rep.test_accuracy), f"{rep.overfit_percent:.4f}",
    ]


def write_results_csv(path: str | Path, rows: Sequence[tuple[ModelSpec, EvalReport]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for spec, rep in rows:
        w.writerow(csv_row(spec, rep))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def format_table(rows: Sequence[tuple[ModelSpec, EvalReport]]) -> str:
    """Aligned table in percent, one row per model/setup."""
    head = ["model", "setup", "train", "P0", "R0", "F1_0", "P1", "R1", "F1_1", "test", "overfit"]
    body = []
    for spec, rep in rows:
        pct = lambda x: f"{100 * x:.2f}"  # noqa: E731
        body.append([spec.architecture, spec.setup, pct(rep.train_accuracy),
                     pct(rep.precision[0]), pct(rep.recall[0]), pct(rep.f1[0]),
                     pct(rep.precision[1]), pct(rep.recall[1]), pct(rep.f1[1]),
                     pct(rep.test_accuracy), f"{rep.overfit_percent:.2f}"])
    widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    lines = [fmt(head), "  ".join("-" * w for w in widths), *map(fmt, body)]
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------------

def cmd_prepare(args) -> int:
    seed = args.seed if args.seed is not None else env_seed()
    seed = 0 if seed is None else seed
    out = Path(args.out)
    kwargs = {"seed": seed}
    for name in ("max_len", "vocab_size", "train_fraction"):
        if getattr(args, name) is not None:
            kwargs[name] = getattr(args, name)
    if not Path(args.input).is_file():
        raise DataError(f"input file not found: {args.input}")
    if args.dataset == "labr":
        if args.balance:
            raise UsageError("--balance applies to the htl dataset only")
        result = ingest_labr(args.input, **kwargs)
    else:
        result = ingest_htl(args.input, balance=args.balance, **kwargs)
    manifest = RunManifest("prepare", {"dataset": args.dataset, "balance": args.balance, **kwargs}, seed)
    save_corpus(out, result)
    manifest.dataset_sha256 = result.manifest["file_sha256"]
    manifest.artifacts = ["documents.tsv", "vocab.txt", MANIFEST_FILE]
    manifest.write(out)
    c = result.corpus
    neg, pos = c.class_counts()
    print(f"{args.dataset}: {len(c)} documents ({pos} positive, {neg} negative), "
          f"train {len(c.train_idx)} / test {len(c.test_idx)}, vocabulary {len(c.vocabulary)}")
    for msg in result.manifest["expected_mismatch"]:
        print(f"note: differs from published totals: {msg}")
    return 0


def _checkpoint_meta(corpus: LabeledCorpus, corpus_digest: str) -> dict:
    return {
        "vocabulary": corpus.vocabulary.to_text(),
        "vocab_sha256": corpus.vocabulary.digest(),
        "corpus_sha256": corpus_digest,
        "dataset": corpus.dataset,
    }


def _train_one(spec: ModelSpec, corpus: LabeledCorpus, out: Path, corpus_digest: str, force: bool) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CHECKPOINT_FILE
    if ckpt.exists() and not force:
        _, old_spec, old_meta = load_model(ckpt)
        if old_spec != spec:
            diff = sorted(k for k, v in spec.to_dict().items() if old_spec.to_dict().get(k) != v)
            raise ConfigError(f"{ckpt} was trained with a different spec (differs in: {', '.join(diff)}); "
                              "use another --out or --force")
        if old_meta.get("vocab_sha256") != corpus.vocabulary.digest():
            raise ConfigError(f"{ckpt} was trained on a different vocabulary; use another --out or --force")
    train(spec, corpus, checkpoint_path=ckpt, trace_path=out / TRACE_FILE,
          checkpoint_meta=_checkpoint_meta(corpus, corpus_digest))
    return ckpt


def cmd_train(args) -> int:
    values = load_config(args.config)
    corpus_dir = Path(_setting("corpus", args.corpus, values))
    out = Path(_setting("out", args.out, values))
    corpus = load_corpus(corpus_dir)
    spec = resolve_spec(values, {"architecture": args.arch, "setup": args.setup,
                                 "seed": args.seed, "epochs": args.epochs}, corpus)
    manifest = RunManifest("train", {**spec.to_dict(), "corpus": str(corpus_dir), "out": str(out)}, spec.seed,
                           _corpus_digest(corpus_dir))
    ckpt = _train_one(spec, corpus, out, manifest.dataset_sha256, args.force)
    manifest.checkpoint = str(ckpt)
    manifest.artifacts = [CHECKPOINT_FILE, TRACE_FILE]
    manifest.write(out)
    print(f"{spec.label}: checkpoint written to {ckpt}")
    return 0


def _load_checkpoint(path: str | Path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"checkpoint not found: {p}")
    return load_model(p)


def cmd_evaluate(args) -> int:
    net, spec, meta = _load_checkpoint(args.checkpoint)
    corpus_dir = Path(args.corpus)
    corpus = load_corpus(corpus_dir)
    if meta.get("vocab_sha256") != corpus.vocabulary.digest():
        raise DataError(
            f"vocabulary mismatch: checkpoint {args.checkpoint} has vocabulary hash "
            f"{str(meta.get('vocab_sha256'))[:12]}..., corpus {corpus_dir} has "
            f"{corpus.vocabulary.digest()[:12]}...; evaluate against the corpus the model was trained on"
        )
    if corpus.max_len != spec.max_len:
        raise DataError(f"corpus max_len {corpus.max_len} != checkpoint max_len {spec.max_len}")
    rep = evaluate(net, corpus)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    record = {"model": spec.architecture, "setup": spec.setup, **rep.to_dict()}
    (out / "evaluation.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_results_csv(out / "evaluation.csv", [(spec, rep)])
    manifest = RunManifest("evaluate", {"checkpoint": str(args.checkpoint), "corpus": str(corpus_dir)}, spec.seed,
                           _corpus_digest(corpus_dir), str(args.checkpoint), ["evaluation.json", "evaluation.csv"])
    manifest.write(out)
    print(format_table([(spec, rep)]), end="")
    return 0


def cmd_explain(args) -> int:
    values = load_config(args.config)
    if not Path(args.checkpoint).is_file():
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    clf = TextClassifier.from_checkpoint(args.checkpoint)
    if args.text is not None:
        review, review_id = args.text, None
    else:
        corpus_dir = args.corpus or values.get("corpus")
        if corpus_dir is None:
            raise UsageError("--id needs --corpus (or 'corpus' in the config file)")
        corpus = load_corpus(corpus_dir)
        if not 0 <= args.id < len(corpus):
            raise InputError(f"--id {args.id} out of range: corpus has {len(corpus)} documents")
        review, review_id = corpus.texts[args.id], str(args.id)
    config = resolve_lime(values, {"num_samples": args.num_samples, "top_k": args.top_k,
                                   "kernel_width": args.kernel_width, "ridge_penalty": args.ridge_penalty,
                                   "seed": args.seed})
    exp = explain(review, clf, config, review_id=review_id)
    report = ExplanationReport.build(review, exp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "explanation.json").write_text(exp.to_json(), encoding="utf-8")
    (out / "explanation.html").write_text(render_html(report), encoding="utf-8")
    (out / "explanation.txt").write_text(render_text(report), encoding="utf-8")
    RunManifest("explain", {"checkpoint": str(args.checkpoint), "review_id": review_id,
                            **dataclasses.asdict(config)}, config.seed, checkpoint=str(args.checkpoint),
                artifacts=["explanation.json", "explanation.html", "explanation.txt"]).write(out)
    print(render_text(report, ansi=sys.stdout.isatty()), end="")
    return 0


def _parse_only(items: Sequence[str] | None) -> list[tuple[str, str]]:
    combos = [(a, s) for a in ARCHITECTURES for s in SETUPS]
    if not items:
        return combos
    chosen = []
    for item in items:
        arch, _, setup = item.rpartition(":")
        if (arch, setup) not in combos:
            raise UsageError(f"--only {item!r}: expected ARCH:SETUP with ARCH in {ARCHITECTURES}, SETUP in {SETUPS}")
        if (arch, setup) not in chosen:
            chosen.append((arch, setup))
    return chosen


def cmd_experiment(args) -> int:
    values = load_config(args.config)
    corpus_dir = Path(_setting("corpus", args.corpus, values))
    out = Path(_setting("out", args.out, values))
    corpus = load_corpus(corpus_dir)
    digest = _corpus_digest(corpus_dir)
    combos = _parse_only(args.only)
    out.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for arch, setup in combos:
        spec = resolve_spec(values, {"architecture": arch, "setup": setup,
                                     "seed": args.seed, "epochs": args.epochs}, corpus)
        run_dir = out / f"{arch}_{setup}"
        try:
            t0 = time.perf_counter()
            ckpt = _train_one(spec, corpus, run_dir, digest, args.force)
            net, _, _ = load_model(ckpt)
            rep = evaluate(net, corpus)
            log.info("%s done in %.0fs: test %.4f", spec.label, time.perf_counter() - t0, rep.test_accuracy)
            rows.append((spec, rep))
        except (ArsentError, FloatingPointError) as exc:
            log.error("%s failed: %s", spec.label, exc)
            failures.append((spec.label, exc))
    if rows:
        write_results_csv(out / RESULTS_CSV, rows)
        (out / RESULTS_TABLE).write_text(format_table(rows), encoding="utf-8")
        print(format_table(rows), end="")
    for label, exc in failures:
        print(f"FAILED {label}: {exc}", file=sys.stderr)
    manifest = RunManifest("experiment", {**{k: v for k, v in values.items()},
                                          "combinations": [f"{a}:{s}" for a, s in combos]},
                           rows[0][0].seed if rows else None, digest,
                           artifacts=[RESULTS_CSV, RESULTS_TABLE] if rows else [])
    manifest.write(out)
    if not rows:
        exc = failures[-1][1]
        return exc.exit_code if isinstance(exc, ArsentError) else NumericError.exit_code
    return 0


def cmd_synth(args) -> int:
    from arsent.synthetic import SyntheticConfig, write_htl_file

    seed = args.seed if args.seed is not None else env_seed()
    config = SyntheticConfig(seed=0 if seed is None else seed)
    path = write_htl_file(args.out, config)
    print(f"synthetic HTL-layout corpus written to {path}")
    return 0


# -- argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="arsent", description="Arabic sentiment classification with LIME explanations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prepare", help="ingest a raw corpus into a prepared corpus directory")
    s.add_argument("--dataset", choices=("labr", "htl"), required=True)
    s.add_argument("--input", required=True, help="raw corpus file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--balance", action="store_true", help="undersample the majority class (htl)")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-len", dest="max_len", type=int)
    s.add_argument("--vocab-size", dest="vocab_size", type=int)
    s.add_argument("--train-fraction", dest="train_fraction", type=float)
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train one model and write a checkpoint")
    s.add_argument("--config", required=True)
    s.add_argument("--arch", choices=ARCHITECTURES)
    s.add_argument("--setup", choices=SETUPS)
    s.add_argument("--corpus", help="prepared corpus directory (overrides config)")
    s.add_argument("--out", help="output directory (overrides config)")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--force", action="store_true", help="overwrite a checkpoint with a different spec")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a checkpoint on both splits of a corpus")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", help="directory for evaluation.json/csv (default: checkpoint directory)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("explain", help="explain one prediction with a local surrogate")
    s.add_argument("--checkpoint", required=True)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="raw review text")
    src.add_argument("--id", type=int, help="document id in --corpus")
    s.add_argument("--corpus")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--num-samples", dest="num_samples", type=int)
    s.add_argument("--top-k", dest="top_k", type=int)
    s.add_argument("--kernel-width", dest="kernel_width", type=float)
    s.add_argument("--ridge-penalty", dest="ridge_penalty", type=float)
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("experiment", help="train and evaluate every architecture x setup")
    s.add_argument("--config", required=True)
    s.add_argument("--only", action="append", metavar="ARCH:SETUP", help="restrict to a combination (repeatable)")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("synth", help="write a synthetic corpus in the HTL file layout")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except ArsentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
