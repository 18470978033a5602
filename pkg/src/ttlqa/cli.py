"""Command-line entry point for reproducible experiments.

Subcommands wire the library stages together: annotate raw text or SQuAD
files, generate pairs, build an index, pretrain a checkpoint, run TTL, and
score predictions.  Every run emits a manifest capturing the configuration,
input digests, and artifact paths, so a run is reproducible from its
manifest alone.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .annotation import (
    heuristic_annotate,
    load_annotations,
    load_squad_dataset,
    save_annotations,
)
from .errors import DataError, TTLQAError, UsageError
from .evaluation import evaluate
from .qgen import RANDOM_SHUFFLED, assemble_training_set, write_pairs
from .retrieval import build_index, load_index, save_index
from .spanmodel import pretrain, save_checkpoint
from .ttl import (
    TTLConfig,
    comparison_table,
    predictions_text,
    run_experiments,
    run_ttl,
    save_records,
)

EXIT_USAGE = 2
EXIT_DATA = 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_input(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path: Path, config: dict, inputs: dict[str, Path],
                   artifacts: dict[str, str], seed) -> None:
    manifest = {
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "input_digests": {name: _sha256(p) for name, p in inputs.items()},
        "artifacts": artifacts,
    }
    _atomic_write(path, json.dumps(manifest, indent=1))


def _load_contexts(path: Path):
    """Accept an interchange file or a SQuAD file (contexts only)."""
    payload = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(payload, dict) and "data" in payload:
        return list(load_squad_dataset(path).contexts)
    return load_annotations(path)


def _parse_order(text: str):
    if text.upper().replace("-", "_") in ("RANDOM", "RANDOM_SHUFFLED"):
        return RANDOM_SHUFFLED
    alias = {"QA_SRL": "QA_SRL", "QASRL": "QA_SRL", "SRL": "QA_SRL",
             "T": "TEMPLATE", "TEMPLATE": "TEMPLATE",
             "DP": "DEP_PARSE", "DEP_PARSE": "DEP_PARSE"}
    parts = [p.strip().upper().replace("-", "_")
             for p in text.split(">")]
    try:
        return tuple(alias[p] for p in parts)
    except KeyError as exc:
        raise UsageError(f"unknown curriculum method {exc.args[0]!r}")


# --------------------------------------------------------------------------
# Subcommands


def cmd_annotate(args) -> int:
    src = _read_input(args.input)
    if args.mode != "heuristic":
        raise UsageError(f"unknown annotation mode {args.mode!r}")
    text = src.read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
        is_squad = isinstance(payload, dict) and "data" in payload
    except json.JSONDecodeError:
        is_squad = False
    if is_squad:
        contexts = list(load_squad_dataset(src).contexts)
    else:
        paragraphs = [p.strip() for p in text.split("\n\n") if p.strip()]
        if not paragraphs:
            raise DataError(f"{src}: no paragraphs to annotate")
        stem = src.stem
        contexts = [
            heuristic_annotate(f"{stem}-{i:04d}", p)
            for i, p in enumerate(paragraphs)
        ]
    save_annotations(contexts, args.out)
    print(f"annotated {len(contexts)} contexts -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    src = _read_input(args.annotations)
    contexts = load_annotations(src)
    order = _parse_order(args.order)
    pairs = []
    for ctx in contexts:
        try:
            pairs.extend(assemble_training_set(
                ctx, cap=args.qa_cap, order=order, seed=args.seed,
                per_method_quota=args.per_method_quota,
            ))
        except DataError:
            continue
    if not pairs:
        raise DataError("no trainable pairs generated for any context")
    write_pairs(pairs, args.out)
    print(f"wrote {len(pairs)} pairs -> {args.out}")
    return 0


def cmd_index(args) -> int:
    src = _read_input(args.annotations)
    contexts = _load_contexts(src)
    index = build_index(contexts, stopword_count=args.stopwords)
    save_index(index, args.out)
    print(f"indexed {index.doc_count} documents "
          f"({len(index.stopwords)} stopwords) -> {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    src = _read_input(args.annotations)
    contexts = _load_contexts(src)
    overrides = {}
    if args.config:
        overrides = json.loads(_read_input(args.config).read_text())
    known = {"steps", "seed", "d", "lr", "batch_size", "qa_cap"}
    for key in overrides:
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
    params = {
        "steps": args.steps, "seed": args.seed, "d": args.d, "lr": args.lr,
        "batch_size": args.batch, "qa_cap": args.qa_cap,
    }
    params.update(overrides)
    model, optim, stats = pretrain(contexts, **params)
    save_checkpoint(model, optim, args.out, seed=params["seed"])
    manifest_path = Path(args.out).with_suffix(".manifest.json")
    write_manifest(manifest_path, params, {"annotations": src},
                   {"checkpoint": str(args.out)}, params["seed"])
    print(f"pretrained {stats['steps']} steps on {stats['pairs']} pairs "
          f"(final loss {stats['final_loss']:.4f}) -> {args.out}")
    return 0


def _ttl_config(args) -> TTLConfig:
    payload = {
        "mode": args.mode.upper(),
        "k": args.k,
        "steps": args.steps,
        "batch_size": args.batch,
        "lr": args.lr,
        "qa_cap": args.qa_cap,
        "per_method_quota": args.per_method_quota,
        "order": _parse_order(args.order),
        "init": args.init,
        "seed": args.seed,
        "d": args.d,
    }
    if args.config:
        overrides = json.loads(_read_input(args.config).read_text())
        if "order" in overrides and isinstance(overrides["order"], str):
            overrides["order"] = _parse_order(overrides["order"])
        if "mode" in overrides:
            overrides["mode"] = overrides["mode"].upper()
        payload.update(overrides)    # config file overrides flags
    return TTLConfig.from_dict(payload)


def cmd_ttl(args) -> int:
    dataset = _read_input(args.dataset)
    if args.config and "experiments" in json.loads(
        _read_input(args.config).read_text()
    ):
        return _ttl_experiments(args, dataset)
    cfg = _ttl_config(args)
    cfg.validate()
    corpus = load_squad_dataset(dataset)
    index = None
    inputs = {"dataset": dataset}
    if args.index:
        index_path = _read_input(args.index)
        index = load_index(index_path)
        inputs["index"] = index_path
    if cfg.init != "DEFAULT":
        inputs["checkpoint"] = _read_input(cfg.init)

    records = run_ttl(corpus, cfg, index=index, workers=args.workers)
    report = evaluate(predictions_text(records), corpus)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_records(records, out / "records.json")
    report.save_json(out / "report.json")
    report.save_csv(out / "per_question.csv")
    (out / "summary.txt").write_text(report.summary_table() + "\n")
    write_manifest(
        out / "manifest.json", cfg.to_dict(), inputs,
        {name: str(out / name) for name in
         ("records.json", "report.json", "per_question.csv", "summary.txt")},
        cfg.seed,
    )
    print(report.summary_table())
    print(f"macro EM {report.macro_em_pct:.2f}% / "
          f"macro F1 {report.macro_f1_pct:.2f}% -> {out}")
    return 0


def _ttl_experiments(args, dataset: Path) -> int:
    payload = json.loads(_read_input(args.config).read_text())
    corpus = load_squad_dataset(dataset)
    index = None
    inputs = {"dataset": dataset, "config": Path(args.config)}
    if args.index:
        index_path = _read_input(args.index)
        index = load_index(index_path)
        inputs["index"] = index_path
    experiments = []
    for entry in payload["experiments"]:
        name = entry.pop("name", f"exp{len(experiments)}")
        if "order" in entry and isinstance(entry["order"], str):
            entry["order"] = _parse_order(entry["order"])
        if "mode" in entry:
            entry["mode"] = entry["mode"].upper()
        experiments.append((name, TTLConfig.from_dict(entry)))
    rows = run_experiments(corpus, experiments, index=index,
                           workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiments.json").write_text(json.dumps(rows, indent=1))
    table = comparison_table(rows)
    (out / "comparison.txt").write_text(table + "\n")
    write_manifest(out / "manifest.json", payload, inputs,
                   {"experiments": str(out / "experiments.json"),
                    "comparison": str(out / "comparison.txt")},
                   payload.get("seed", 0))
    print(table)
    return 0


def cmd_eval(args) -> int:
    pred_path = _read_input(args.predictions)
    dataset = _read_input(args.dataset)
    predictions = json.loads(pred_path.read_text(encoding="utf-8"))
    if not predictions:
        raise DataError("predictions file is empty")
    corpus = load_squad_dataset(dataset)
    known = {q.id for qs in corpus.questions.values() for q in qs}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise DataError("predictions reference unknown question ids: "
                        + ", ".join(unknown[:5]))
    report = evaluate(predictions, corpus)
    if args.out:
        report.save_json(args.out)
    print(report.summary_table())
    return 0


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttlqa",
        description="Test-time learning for extractive QA",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate raw text or SQuAD input")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="heuristic")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("generate", help="generate QA pairs per context")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--qa-cap", type=int, default=4000)
    p.add_argument("--per-method-quota", type=int, default=1000)
    p.add_argument("--order", default="random")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("index", help="build a BM25 index file")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords", type=int, default=30)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("pretrain", help="pretrain a checkpoint on "
                                        "synthetic pairs")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--qa-cap", type=int, default=4000)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("ttl", help="run test-time learning over a dataset")
    p.add_argument("--dataset", required=True, help="SQuAD-format file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config (overrides flags); may "
                                    "hold an experiments list")
    p.add_argument("--index", help="index file for neighbor modes")
    p.add_argument("--mode", default="single")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--qa-cap", type=int, default=4000)
    p.add_argument("--per-method-quota", type=int, default=1000)
    p.add_argument("--order", default="random")
    p.add_argument("--init", default="DEFAULT")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ttl)

    p = sub.add_parser("eval", help="score a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TTLQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
