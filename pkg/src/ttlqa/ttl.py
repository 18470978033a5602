"""Test-time learning orchestration.

Modes:
  * SINGLE            — per context: fresh head, train on the context's own
                        synthetic pairs, answer its questions, discard state;
  * SINGLE_ONLINE     — same, but head and optimizer state carry over from
                        one context to the next (features persist too);
  * K_NEIGHBOR        — training pool expanded with the K most similar
                        indexed contexts (the test context always included);
  * K_NEIGHBOR_ONLINE — neighbor expansion plus online persistence;
  * CURRICULUM        — K-neighbor training with method-blocked pair order
                        and strictly sequential batches;
  * ALL_CONTEXTS      — one shared model trained on every context's pairs,
                        evaluated everywhere without further adaptation.

Per-context seeding is derived from (run seed, context id), so non-online
runs are order-independent: permuting the corpus permutes the records.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotation import AnnotatedContext, Corpus
from .errors import UsageError
from .qgen import (
    DEFAULT_METHODS,
    DEFAULT_METHOD_QUOTA,
    DEFAULT_QA_CAP,
    RANDOM_SHUFFLED,
    SyntheticQA,
    assemble_pooled_training_set,
    normalize_order,
)
from .retrieval import Index, expand_context
from .spanmodel import (
    DEFAULT_MAX_SEQ,
    DEFAULT_SPAN_CAP,
    DEFAULT_STRIDE,
    OptimState,
    SpanModel,
    TrainingExample,
    Vocab,
    build_vocab,
    char_span_to_token_span,
    init_model,
    iterate_batches,
    load_checkpoint,
    predict_span,
    reinit_head,
    split_windows,
    train_step,
)

SINGLE = "SINGLE"
SINGLE_ONLINE = "SINGLE_ONLINE"
K_NEIGHBOR = "K_NEIGHBOR"
K_NEIGHBOR_ONLINE = "K_NEIGHBOR_ONLINE"
CURRICULUM = "CURRICULUM"
ALL_CONTEXTS = "ALL_CONTEXTS"
MODES = (SINGLE, SINGLE_ONLINE, K_NEIGHBOR, K_NEIGHBOR_ONLINE,
         CURRICULUM, ALL_CONTEXTS)
ONLINE_MODES = (SINGLE_ONLINE, K_NEIGHBOR_ONLINE)
NEIGHBOR_MODES = (K_NEIGHBOR, K_NEIGHBOR_ONLINE, CURRICULUM)

MAX_STEPS = 1500
DEFAULT_ONLINE_STEPS = 100
BATCH_RANGE = (16, 64)

DEFAULT_INIT = "DEFAULT"


def mix_seed(*parts) -> int:
    """Stable cross-run seed derivation from a run seed and string parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class TTLConfig:
    mode: str = SINGLE
    k: int = 5
    steps: int | None = None            # resolved per mode when unset
    batch_size: int = 32
    lr: float = 1e-3
    qa_cap: int = DEFAULT_QA_CAP
    per_method_quota: int = DEFAULT_METHOD_QUOTA
    methods: tuple[str, ...] = DEFAULT_METHODS
    order: object = RANDOM_SHUFFLED
    init: str = DEFAULT_INIT            # DEFAULT or a checkpoint path
    seed: int = 0
    d: int = 32
    max_seq: int = DEFAULT_MAX_SEQ
    stride: int = DEFAULT_STRIDE
    span_cap: int = DEFAULT_SPAN_CAP
    override_limits: bool = False

    def resolved_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        return DEFAULT_ONLINE_STEPS if self.mode in ONLINE_MODES else MAX_STEPS

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        normalize_order(self.order)
        if self.mode in NEIGHBOR_MODES and self.k < 1:
            raise UsageError("k must be >= 1 for neighbor modes")
        if self.override_limits:
            return
        if self.resolved_steps() > MAX_STEPS:
            raise UsageError(
                f"steps {self.resolved_steps()} exceed the {MAX_STEPS} cap "
                f"(set override_limits to exceed it)"
            )
        lo, hi = BATCH_RANGE
        if not (lo <= self.batch_size <= hi):
            raise UsageError(
                f"batch_size {self.batch_size} outside [{lo}, {hi}] "
                f"(set override_limits to exceed it)"
            )

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode, "k": self.k, "steps": self.steps,
            "batch_size": self.batch_size, "lr": self.lr,
            "qa_cap": self.qa_cap,
            "per_method_quota": self.per_method_quota,
            "methods": list(self.methods),
            "order": (self.order if isinstance(self.order, str)
                      else list(self.order)),
            "init": self.init, "seed": self.seed, "d": self.d,
            "max_seq": self.max_seq, "stride": self.stride,
            "span_cap": self.span_cap,
            "override_limits": self.override_limits,
        }
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TTLConfig":
        known = set(cls.__dataclass_fields__)
        for key in payload:
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
        kwargs = dict(payload)
        if "methods" in kwargs:
            kwargs["methods"] = tuple(kwargs["methods"])
        if "order" in kwargs and not isinstance(kwargs["order"], str):
            kwargs["order"] = tuple(kwargs["order"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PredictionRecord:
    question_id: str
    text: str
    start_char: int
    end_char: int
    score: float


@dataclass(frozen=True)
class RunRecord:
    context_id: str
    mode: str
    pair_counts: dict[str, int]
    total_pairs: int
    steps_executed: int
    final_loss: float | None
    predictions: tuple[PredictionRecord, ...]
    head_fingerprint_in: str
    head_fingerprint_out: str
    wall_time: float = field(compare=False, default=0.0)

    def assert_within(self, cfg: TTLConfig) -> None:
        assert self.steps_executed <= cfg.resolved_steps()
        assert self.total_pairs <= cfg.qa_cap
        if cfg.order != RANDOM_SHUFFLED:
            for count in self.pair_counts.values():
                assert count <= cfg.per_method_quota

    def to_dict(self, include_timing: bool = False) -> dict:
        # timing is excluded by default so results files are digest-stable
        out = {
            "context_id": self.context_id,
            "mode": self.mode,
            "pair_counts": dict(self.pair_counts),
            "total_pairs": self.total_pairs,
            "steps_executed": self.steps_executed,
            "final_loss": self.final_loss,
            "head_fingerprint_in": self.head_fingerprint_in,
            "head_fingerprint_out": self.head_fingerprint_out,
            "predictions": [
                {
                    "question_id": p.question_id,
                    "text": p.text,
                    "start_char": p.start_char,
                    "end_char": p.end_char,
                    "score": p.score,
                }
                for p in self.predictions
            ],
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def predictions_text(records) -> dict[str, str]:
    """Flatten run records into the {question id: answer text} mapping the
    evaluator consumes."""
    out: dict[str, str] = {}
    for record in records:
        for p in record.predictions:
            out[p.question_id] = p.text
    return out


def save_records(records, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([r.to_dict() for r in records], indent=1),
        encoding="utf-8",
    )


# --------------------------------------------------------------------------
# Model preparation


class _CheckpointCache:
    """Loads a checkpoint at most once per run."""

    def __init__(self, path: str | None):
        self.path = path
        self._loaded: tuple[SpanModel, OptimState] | None = None

    def get(self, expect_d: int) -> tuple[SpanModel, OptimState]:
        if self._loaded is None:
            self._loaded = load_checkpoint(self.path, expect_d=expect_d)
        return self._loaded


def _fresh_model(
    cfg: TTLConfig, vocab: Vocab, ctx_id: str, ckpt: _CheckpointCache,
) -> tuple[SpanModel, OptimState]:
    """Per-context initialization: features per cfg.init, head freshly drawn
    from the (run seed, context id) mix, fresh optimizer."""
    if cfg.init == DEFAULT_INIT:
        model = init_model(vocab, cfg.d, cfg.seed, p_max=cfg.max_seq)
    else:
        model = ckpt.get(cfg.d)[0].copy()
    reinit_head(model, mix_seed(cfg.seed, "head", ctx_id))
    return model, OptimState.for_model(model, lr=cfg.lr)


def _assemble(contexts, cfg: TTLConfig, seed: int) -> list[SyntheticQA]:
    return assemble_pooled_training_set(
        contexts,
        methods=cfg.methods,
        cap=cfg.qa_cap,
        order=cfg.order,
        seed=seed,
        per_method_quota=cfg.per_method_quota,
    )


def _examples_in_order(
    pairs: list[SyntheticQA], ctx_map: dict[str, AnnotatedContext],
    vocab: Vocab, cfg: TTLConfig,
) -> list[TrainingExample]:
    """Build one windowed example per pair, preserving pair order so
    curriculum blocks survive into sequential batching."""
    cache: dict[str, tuple] = {}
    ordered = []
    for pair in pairs:
        ctx = ctx_map[pair.context_id]
        if pair.context_id not in cache:
            token_ids = vocab.encode([t.text.lower() for t in ctx.tokens])
            windows = split_windows(len(ctx.tokens), cfg.max_seq, cfg.stride)
            cache[pair.context_id] = (token_ids, windows)
        token_ids, windows = cache[pair.context_id]
        span = char_span_to_token_span(ctx, pair.start_char, pair.end_char)
        if span is None:
            continue
        start_tok, end_tok = span
        home = next(
            (w for w in windows
             if w.start <= start_tok and end_tok <= w.end),
            None,
        )
        if home is None:
            continue
        ordered.append(TrainingExample(
            window_ids=token_ids[home.start:home.end],
            question_ids=vocab.encode_text(pair.question),
            answer_start=start_tok - home.start,
            answer_stop=end_tok - 1 - home.start,
        ))
    return ordered


def _train_and_predict(
    model: SpanModel,
    optim: OptimState,
    examples: list[TrainingExample],
    ctx: AnnotatedContext,
    questions,
    cfg: TTLConfig,
    batch_rng: np.random.Generator | None,
) -> tuple[int, float | None, tuple[PredictionRecord, ...]]:
    steps = cfg.resolved_steps()
    final_loss = None
    executed = 0
    for batch in iterate_batches(examples, cfg.batch_size, steps, batch_rng):
        final_loss = train_step(model, optim, batch)
        executed += 1
    preds = []
    for q in questions:
        p = predict_span(model, ctx, q.text, cfg.span_cap,
                         cfg.max_seq, cfg.stride)
        preds.append(PredictionRecord(q.id, p.text, p.start_char,
                                      p.end_char, p.score))
    return executed, final_loss, tuple(preds)


def _count_methods(pairs) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in pairs:
        counts[p.method] = counts.get(p.method, 0) + 1
    return counts


def _run_one_context(
    ctx: AnnotatedContext,
    questions,
    cfg: TTLConfig,
    vocab: Vocab,
    ckpt: _CheckpointCache,
    index: Index | None,
    carry: tuple[SpanModel, OptimState] | None,
) -> tuple[RunRecord, tuple[SpanModel, OptimState]]:
    t0 = time.perf_counter()
    if cfg.mode in NEIGHBOR_MODES:
        train_ctxs = expand_context(index, ctx, cfg.k)
    else:
        train_ctxs = [ctx]
    pairs = _assemble(train_ctxs, cfg, mix_seed(cfg.seed, "pairs", ctx.id))
    ctx_map = {c.id: c for c in train_ctxs}
    examples = _examples_in_order(pairs, ctx_map, vocab, cfg)

    if carry is not None:
        model, optim = carry
    else:
        model, optim = _fresh_model(cfg, vocab, ctx.id, ckpt)
    fp_in = model.head_fingerprint()

    sequential = cfg.mode == CURRICULUM
    batch_rng = (None if sequential
                 else np.random.default_rng(
                     mix_seed(cfg.seed, "batches", ctx.id)))
    executed, final_loss, preds = _train_and_predict(
        model, optim, examples, ctx, questions, cfg, batch_rng
    )
    record = RunRecord(
        context_id=ctx.id,
        mode=cfg.mode,
        pair_counts=_count_methods(pairs),
        total_pairs=len(pairs),
        steps_executed=executed,
        final_loss=final_loss,
        predictions=preds,
        head_fingerprint_in=fp_in,
        head_fingerprint_out=model.head_fingerprint(),
        wall_time=time.perf_counter() - t0,
    )
    record.assert_within(cfg)
    return record, (model, optim)


# --------------------------------------------------------------------------
# Public run operations


def _corpus_vocab(corpus: Corpus, cfg: TTLConfig,
                  index: Index | None) -> tuple[Vocab, _CheckpointCache]:
    ckpt = _CheckpointCache(None if cfg.init == DEFAULT_INIT else cfg.init)
    if cfg.init != DEFAULT_INIT:
        return ckpt.get(cfg.d)[0].vocab, ckpt
    contexts = list(corpus.contexts)
    if index is not None and cfg.mode in NEIGHBOR_MODES:
        contexts += [index.docs[d] for d in index.doc_order]
    return build_vocab(contexts), ckpt


def run_single_context(
    ctx: AnnotatedContext, questions, cfg: TTLConfig,
    vocab: Vocab | None = None,
) -> RunRecord:
    """Adapt a fresh model to one context and answer its questions; no state
    survives the call."""
    cfg = replace(cfg, mode=SINGLE) if cfg.mode != SINGLE else cfg
    cfg.validate()
    ckpt = _CheckpointCache(None if cfg.init == DEFAULT_INIT else cfg.init)
    if vocab is None:
        vocab = (ckpt.get(cfg.d)[0].vocab if cfg.init != DEFAULT_INIT
                 else build_vocab([ctx]))
    record, _ = _run_one_context(ctx, questions, cfg, vocab, ckpt,
                                 index=None, carry=None)
    return record


def run_k_neighbor(
    ctx: AnnotatedContext, index: Index, questions, cfg: TTLConfig,
    vocab: Vocab | None = None,
) -> RunRecord:
    """Single-context adaptation over a neighbor-expanded training pool."""
    if cfg.mode not in (K_NEIGHBOR, K_NEIGHBOR_ONLINE, CURRICULUM):
        cfg = replace(cfg, mode=K_NEIGHBOR)
    cfg.validate()
    ckpt = _CheckpointCache(None if cfg.init == DEFAULT_INIT else cfg.init)
    if vocab is None:
        if cfg.init != DEFAULT_INIT:
            vocab = ckpt.get(cfg.d)[0].vocab
        else:
            vocab = build_vocab([ctx] + [index.docs[d]
                                         for d in index.doc_order])
    record, _ = _run_one_context(ctx, questions, cfg, vocab, ckpt,
                                 index=index, carry=None)
    return record


def run_online(
    stream, cfg: TTLConfig, index: Index | None = None,
    vocab: Vocab | None = None,
) -> list[RunRecord]:
    """Sequential adaptation: the first context behaves exactly like the
    non-online mode; afterwards the head, features, and optimizer state of
    context i-1 seed context i."""
    if cfg.mode not in ONLINE_MODES:
        raise UsageError(f"run_online requires an online mode, got {cfg.mode}")
    cfg.validate()
    stream = list(stream)
    corpus = Corpus(
        contexts=tuple(ctx for ctx, _ in stream),
        questions={ctx.id: tuple(qs) for ctx, qs in stream},
    )
    if vocab is None:
        vocab, ckpt = _corpus_vocab(corpus, cfg, index)
    else:
        ckpt = _CheckpointCache(
            None if cfg.init == DEFAULT_INIT else cfg.init
        )
    records = []
    carry = None
    for ctx, questions in stream:
        record, carry = _run_one_context(
            ctx, questions, cfg, vocab, ckpt, index=index, carry=carry
        )
        records.append(record)
    return records


def run_curriculum(
    corpus: Corpus, index: Index, cfg: TTLConfig,
    vocab: Vocab | None = None,
) -> list[RunRecord]:
    """K-neighbor adaptation with method-blocked pairs and sequential
    batches (no shuffling), one record per context."""
    cfg = replace(cfg, mode=CURRICULUM) if cfg.mode != CURRICULUM else cfg
    cfg.validate()
    if vocab is None:
        vocab, ckpt = _corpus_vocab(corpus, cfg, index)
    else:
        ckpt = _CheckpointCache(
            None if cfg.init == DEFAULT_INIT else cfg.init
        )
    records = []
    for ctx in corpus.contexts:
        record, _ = _run_one_context(
            ctx, corpus.questions.get(ctx.id, ()), cfg, vocab, ckpt,
            index=index, carry=None,
        )
        records.append(record)
    return records


def run_all_contexts_baseline(
    corpus: Corpus, cfg: TTLConfig, vocab: Vocab | None = None,
) -> list[RunRecord]:
    """One shared model trained on the pooled pairs of every context, then
    evaluated on all questions with no per-context adaptation."""
    cfg = replace(cfg, mode=ALL_CONTEXTS) if cfg.mode != ALL_CONTEXTS else cfg
    cfg.validate()
    ckpt = _CheckpointCache(None if cfg.init == DEFAULT_INIT else cfg.init)
    if vocab is None:
        vocab, ckpt = _corpus_vocab(corpus, cfg, None)
    t0 = time.perf_counter()

    # Per-context caps apply before pooling; deduplication is per-context,
    # so identical pairs from different contexts are all kept.
    pooled: list[SyntheticQA] = []
    per_ctx_counts: dict[str, dict[str, int]] = {}
    per_ctx_totals: dict[str, int] = {}
    for ctx in corpus.contexts:
        pairs = _assemble([ctx], cfg, mix_seed(cfg.seed, "pairs", ctx.id))
        per_ctx_counts[ctx.id] = _count_methods(pairs)
        per_ctx_totals[ctx.id] = len(pairs)
        pooled.extend(pairs)

    ctx_map = {c.id: c for c in corpus.contexts}
    examples = _examples_in_order(pooled, ctx_map, vocab, cfg)
    if cfg.init == DEFAULT_INIT:
        model = init_model(vocab, cfg.d, cfg.seed, p_max=cfg.max_seq)
    else:
        model = ckpt.get(cfg.d)[0].copy()
    reinit_head(model, mix_seed(cfg.seed, "head"))
    optim = OptimState.for_model(model, lr=cfg.lr)
    fp_in = model.head_fingerprint()

    batch_rng = np.random.default_rng(mix_seed(cfg.seed, "batches"))
    final_loss = None
    executed = 0
    for batch in iterate_batches(examples, cfg.batch_size,
                                 cfg.resolved_steps(), batch_rng):
        final_loss = train_step(model, optim, batch)
        executed += 1
    fp_out = model.head_fingerprint()
    shared_time = time.perf_counter() - t0

    records = []
    for ctx in corpus.contexts:
        preds = []
        for q in corpus.questions.get(ctx.id, ()):
            p = predict_span(model, ctx, q.text, cfg.span_cap,
                             cfg.max_seq, cfg.stride)
            preds.append(PredictionRecord(q.id, p.text, p.start_char,
                                          p.end_char, p.score))
        records.append(RunRecord(
            context_id=ctx.id,
            mode=cfg.mode,
            pair_counts=per_ctx_counts[ctx.id],
            total_pairs=per_ctx_totals[ctx.id],
            steps_executed=executed,
            final_loss=final_loss,
            predictions=tuple(preds),
            head_fingerprint_in=fp_in,
            head_fingerprint_out=fp_out,
            wall_time=shared_time / max(1, len(corpus.contexts)),
        ))
        records[-1].assert_within(cfg)
    return records


def run_ttl(
    corpus: Corpus, cfg: TTLConfig, index: Index | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """Run the configured mode over every corpus context, in corpus order."""
    cfg.validate()
    if cfg.mode in NEIGHBOR_MODES and index is None:
        raise UsageError(f"mode {cfg.mode} requires an index")
    if cfg.mode == ALL_CONTEXTS:
        return run_all_contexts_baseline(corpus, cfg)
    stream = [(ctx, corpus.questions.get(ctx.id, ()))
              for ctx in corpus.contexts]
    if cfg.mode in ONLINE_MODES:
        return run_online(stream, cfg, index=index)
    vocab, ckpt = _corpus_vocab(corpus, cfg, index)
    if workers > 1:
        return _run_parallel(stream, cfg, vocab, index, workers)
    records = []
    for ctx, questions in stream:
        record, _ = _run_one_context(ctx, questions, cfg, vocab, ckpt,
                                     index=index, carry=None)
        records.append(record)
    return records


def _parallel_worker(payload):
    ctx, questions, cfg, vocab, index = payload
    ckpt = _CheckpointCache(None if cfg.init == DEFAULT_INIT else cfg.init)
    record, _ = _run_one_context(ctx, questions, cfg, vocab, ckpt,
                                 index=index, carry=None)
    return record


def _run_parallel(stream, cfg, vocab, index, workers: int):
    from concurrent.futures import ProcessPoolExecutor

    payloads = [(ctx, qs, cfg, vocab, index) for ctx, qs in stream]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_parallel_worker, payloads))


# --------------------------------------------------------------------------
# Experiment sweeps


def run_experiments(
    corpus: Corpus,
    experiments: list[tuple[str, TTLConfig]],
    index: Index | None = None,
    workers: int = 1,
) -> list[dict]:
    """Run each named config and emit long-format rows for external tooling."""
    from .evaluation import evaluate

    rows = []
    for name, cfg in experiments:
        records = run_ttl(corpus, cfg, index=index, workers=workers)
        report = evaluate(predictions_text(records), corpus)
        rows.append({
            "experiment": name,
            "mode": cfg.mode,
            "order": (cfg.order if isinstance(cfg.order, str)
                      else ">".join(cfg.order)),
            "seed": cfg.seed,
            "k": cfg.k if cfg.mode in NEIGHBOR_MODES else None,
            "steps": cfg.resolved_steps(),
            "qa_cap": cfg.qa_cap,
            "contexts": len(corpus.contexts),
            "questions": len(report.scores),
            "macro_em": report.macro_em,
            "macro_f1": report.macro_f1,
        })
    return rows


def comparison_table(rows: list[dict]) -> str:
    header = (f"{'experiment':<26} {'mode':<18} {'order':<24} "
              f"{'seed':>4} {'EM%':>7} {'F1%':>7}")
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['experiment']:<26} {row['mode']:<18} "
            f"{str(row['order']):<24} {row['seed']:>4} "
            f"{100 * row['macro_em']:>7.2f} {100 * row['macro_f1']:>7.2f}"
        )
    return "\n".join(lines)
