"""A small trainable span-extraction model with hand-derived gradients.

The model scores every window token as a span start and as a span stop:

    h_i     = E[c_i] + P[min(i, p_max - 1)]          token features
    q_bar   = mean_j E[q_j]                          pooled question
    start_i = h_i^T W_start q_bar + b_start^T h_i
    stop_i  = h_i^T W_stop  q_bar + b_stop^T  h_i

Training minimizes cross-entropy of the start and stop softmax distributions
against the answer endpoints; all gradients are written out analytically and
updated with Adam.  Everything is float64 so finite-difference checks are
meaningful.

Parameter groups: the feature extractor (vocabulary, E, P) and the answering
head (W_start, W_stop, b_start, b_stop).  Checkpoints serialize both, plus
optimizer state, in a fixed declared order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation import AnnotatedContext
from .errors import DataError, ParseError, UsageError
from .qgen import (
    DEFAULT_METHODS,
    DEFAULT_QA_CAP,
    RANDOM_SHUFFLED,
    SyntheticQA,
    assemble_pooled_training_set,
)

UNK = "[UNK]"
RESERVED_TOKENS = (
    UNK, "[PERSON]", "[LOCATION]", "[TEMPORAL]", "[NUMERIC]", "[THING]",
)
# Words the question templates can introduce beyond the passage vocabulary.
QUESTION_WORDS = (
    "who", "what", "where", "when", "why", "how", "many", "did", "was",
    "someone", "something", "?",
)

DEFAULT_MAX_SEQ = 384
DEFAULT_STRIDE = 128
DEFAULT_SPAN_CAP = 30

_MODEL_TOKEN_RE = re.compile(
    r"\[(?:PERSON|LOCATION|TEMPORAL|NUMERIC|THING)\]|\w+|[^\w\s]"
)

CHECKPOINT_FORMAT_VERSION = 1


def model_tokenize(text: str) -> list[str]:
    """Lowercased word/punctuation tokens; category masks stay whole."""
    return [
        t if t.startswith("[") else t.lower()
        for t in _MODEL_TOKEN_RE.findall(text)
    ]


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: dict[str, int]

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words) -> np.ndarray:
        return np.array([self.index.get(w, 0) for w in words], dtype=np.int64)

    def encode_text(self, text: str) -> np.ndarray:
        return self.encode(model_tokenize(text))


def build_vocab(contexts, extra_tokens=()) -> Vocab:
    """Reserved tokens first, then the sorted lowercased corpus vocabulary."""
    seen: set[str] = set()
    for ctx in contexts:
        seen.update(t.text.lower() for t in ctx.tokens)
    seen.update(QUESTION_WORDS)
    seen.update(extra_tokens)
    ordinary = sorted(seen - set(RESERVED_TOKENS))
    tokens = tuple(RESERVED_TOKENS) + tuple(ordinary)
    return Vocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)})


@dataclass
class SpanModel:
    vocab: Vocab
    d: int
    p_max: int
    emb: np.ndarray          # (V, d)
    pos: np.ndarray          # (p_max, d)
    w_start: np.ndarray      # (d, d)
    w_stop: np.ndarray       # (d, d)
    b_start: np.ndarray      # (d,)
    b_stop: np.ndarray       # (d,)

    def parameters(self) -> list[np.ndarray]:
        """Declared parameter order used everywhere (grads, Adam, files)."""
        return [self.emb, self.pos, self.w_start, self.w_stop,
                self.b_start, self.b_stop]

    def head_parameters(self) -> list[np.ndarray]:
        return [self.w_start, self.w_stop, self.b_start, self.b_stop]

    def head_fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for p in self.head_parameters():
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()

    def copy(self) -> "SpanModel":
        return SpanModel(
            vocab=self.vocab, d=self.d, p_max=self.p_max,
            emb=self.emb.copy(), pos=self.pos.copy(),
            w_start=self.w_start.copy(), w_stop=self.w_stop.copy(),
            b_start=self.b_start.copy(), b_stop=self.b_stop.copy(),
        )


@dataclass
class OptimState:
    """Adam moments per parameter, in the model's declared order."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: SpanModel, lr: float = 1e-3) -> "OptimState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in model.parameters()],
            v=[np.zeros_like(p) for p in model.parameters()],
        )

    def apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.step += 1
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def init_model(
    vocab: Vocab, d: int, seed: int, p_max: int = DEFAULT_MAX_SEQ,
) -> SpanModel:
    """Fresh parameters: embeddings uniform(-0.05, 0.05), head normal(0, 0.02)."""
    if d < 2:
        raise UsageError("model dimension must be at least 2")
    if len(vocab) == 0:
        raise UsageError("vocabulary is empty")
    rng = np.random.default_rng(seed)
    return SpanModel(
        vocab=vocab,
        d=d,
        p_max=p_max,
        emb=rng.uniform(-0.05, 0.05, size=(len(vocab), d)),
        pos=rng.uniform(-0.05, 0.05, size=(p_max, d)),
        w_start=rng.normal(0.0, 0.02, size=(d, d)),
        w_stop=rng.normal(0.0, 0.02, size=(d, d)),
        b_start=rng.normal(0.0, 0.02, size=d),
        b_stop=rng.normal(0.0, 0.02, size=d),
    )


def reinit_head(model: SpanModel, seed: int) -> None:
    """Redraw the answering head in place, leaving features untouched."""
    rng = np.random.default_rng(seed)
    model.w_start = rng.normal(0.0, 0.02, size=(model.d, model.d))
    model.w_stop = rng.normal(0.0, 0.02, size=(model.d, model.d))
    model.b_start = rng.normal(0.0, 0.02, size=model.d)
    model.b_stop = rng.normal(0.0, 0.02, size=model.d)


# --------------------------------------------------------------------------
# Windows


@dataclass(frozen=True)
class Window:
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


def split_windows(
    n: int, budget: int = DEFAULT_MAX_SEQ, stride: int = DEFAULT_STRIDE,
) -> list[Window]:
    """Strided windows covering all n tokens; the last window is clipped."""
    if n < 1:
        raise DataError("cannot window an empty token sequence")
    if not (0 < stride <= budget):
        raise UsageError("stride must satisfy 0 < stride <= budget")
    windows = []
    start = 0
    while True:
        windows.append(Window(start, min(start + budget, n)))
        if start + budget >= n:
            return windows
        start += stride


# --------------------------------------------------------------------------
# Forward pass, loss, gradients


def _features(model: SpanModel, window_ids: np.ndarray) -> np.ndarray:
    positions = np.minimum(np.arange(len(window_ids)), model.p_max - 1)
    return model.emb[window_ids] + model.pos[positions]


def forward(
    model: SpanModel, window_ids: np.ndarray, question_ids: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Start and stop logits over the window tokens."""
    if len(question_ids) == 0:
        raise DataError("empty question")
    h = _features(model, window_ids)
    q_bar = model.emb[question_ids].mean(axis=0)
    start = h @ (model.w_start @ q_bar + model.b_start)
    stop = h @ (model.w_stop @ q_bar + model.b_stop)
    return start, stop


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class TrainingExample:
    """One windowed training item; answer endpoints are window-local and
    inclusive."""

    window_ids: np.ndarray
    question_ids: np.ndarray
    answer_start: int
    answer_stop: int

    def check(self) -> None:
        n = len(self.window_ids)
        if not (0 <= self.answer_start <= self.answer_stop < n):
            raise DataError(
                f"answer span ({self.answer_start}, {self.answer_stop}) "
                f"outside window of {n} tokens"
            )


def compute_loss_and_grads(
    model: SpanModel, batch: list[TrainingExample],
) -> tuple[float, list[np.ndarray]]:
    """Mean start+stop cross-entropy and analytic gradients for the batch.

    Examples sharing identical window contents are processed together so the
    n x d feature matrix is built once per distinct window.
    """
    if not batch:
        raise DataError("empty batch")
    for ex in batch:
        ex.check()

    grads = [np.zeros_like(p) for p in model.parameters()]
    d_emb, d_pos, d_ws, d_wt, d_bs, d_bt = grads
    total_loss = 0.0
    scale = 1.0 / len(batch)

    groups: dict[bytes, list[TrainingExample]] = {}
    for ex in batch:
        groups.setdefault(ex.window_ids.tobytes(), []).append(ex)

    for members in groups.values():
        window_ids = members[0].window_ids
        n = len(window_ids)
        positions = np.minimum(np.arange(n), model.p_max - 1)
        h = model.emb[window_ids] + model.pos[positions]          # (n, d)

        q_bar = np.stack([
            model.emb[ex.question_ids].mean(axis=0) for ex in members
        ])                                                        # (B, d)
        u_start = q_bar @ model.w_start.T + model.b_start         # (B, d)
        u_stop = q_bar @ model.w_stop.T + model.b_stop
        s_logits = h @ u_start.T                                  # (n, B)
        t_logits = h @ u_stop.T

        p_s = softmax(s_logits)
        p_t = softmax(t_logits)
        starts = np.array([ex.answer_start for ex in members])
        stops = np.array([ex.answer_stop for ex in members])
        cols = np.arange(len(members))
        total_loss -= scale * (
            np.log(p_s[starts, cols]).sum() + np.log(p_t[stops, cols]).sum()
        )

        g_s = p_s.copy()
        g_s[starts, cols] -= 1.0
        g_t = p_t.copy()
        g_t[stops, cols] -= 1.0
        g_s *= scale
        g_t *= scale

        du_start = g_s.T @ h                                      # (B, d)
        du_stop = g_t.T @ h
        d_ws += du_start.T @ q_bar
        d_wt += du_stop.T @ q_bar
        d_bs += du_start.sum(axis=0)
        d_bt += du_stop.sum(axis=0)

        d_h = g_s @ u_start + g_t @ u_stop                        # (n, d)
        np.add.at(d_emb, window_ids, d_h)
        np.add.at(d_pos, positions, d_h)

        d_qbar = du_start @ model.w_start + du_stop @ model.w_stop
        for b, ex in enumerate(members):
            np.add.at(
                d_emb, ex.question_ids, d_qbar[b] / len(ex.question_ids)
            )
    return total_loss, grads


def compute_loss(model: SpanModel, batch: list[TrainingExample]) -> float:
    return compute_loss_and_grads(model, batch)[0]


def train_step(
    model: SpanModel, optim: OptimState, batch: list[TrainingExample],
) -> float:
    """One Adam update over the batch; returns the pre-update mean loss."""
    loss, grads = compute_loss_and_grads(model, batch)
    optim.apply(model.parameters(), grads)
    return loss


# --------------------------------------------------------------------------
# Prediction


@dataclass(frozen=True)
class SpanPrediction:
    start_char: int
    end_char: int
    text: str
    score: float


def best_span(
    start_logits: np.ndarray, stop_logits: np.ndarray,
    span_cap: int = DEFAULT_SPAN_CAP,
) -> tuple[int, int, float]:
    """Highest start_i + stop_j over i <= j < i + span_cap; first (i, j) on
    ties (row-major argmax)."""
    n = len(start_logits)
    scores = start_logits[:, None] + stop_logits[None, :]
    offsets = np.arange(n)[None, :] - np.arange(n)[:, None]
    scores[(offsets < 0) | (offsets >= span_cap)] = -np.inf
    flat = int(np.argmax(scores))
    i, j = divmod(flat, n)
    return i, j, float(scores[i, j])


def predict_span(
    model: SpanModel,
    ctx: AnnotatedContext,
    question: str,
    span_cap: int = DEFAULT_SPAN_CAP,
    max_seq: int = DEFAULT_MAX_SEQ,
    stride: int = DEFAULT_STRIDE,
) -> SpanPrediction:
    """Best-scoring span over all windows, mapped back to character offsets.

    Ties break toward the earlier window, then the smaller start and stop.
    """
    words = [t.text.lower() for t in ctx.tokens]
    token_ids = model.vocab.encode(words)
    question_ids = model.vocab.encode_text(question)
    best: tuple[float, int, int] | None = None
    for window in split_windows(len(ctx.tokens), max_seq, stride):
        start_logits, stop_logits = forward(
            model, token_ids[window.start:window.end], question_ids
        )
        i, j, score = best_span(start_logits, stop_logits, span_cap)
        if best is None or score > best[0]:
            best = (score, window.start + i, window.start + j)
    score, tok_i, tok_j = best
    start_char = ctx.tokens[tok_i].start_char
    end_char = ctx.tokens[tok_j].end_char
    return SpanPrediction(
        start_char=start_char,
        end_char=end_char,
        text=ctx.text[start_char:end_char],
        score=score,
    )


# --------------------------------------------------------------------------
# Building training instances from synthetic pairs


def char_span_to_token_span(
    ctx: AnnotatedContext, start_char: int, end_char: int,
) -> tuple[int, int] | None:
    """Token range [start_tok, end_tok) of tokens overlapping the char span."""
    covered = [
        k for k, t in enumerate(ctx.tokens)
        if t.start_char < end_char and t.end_char > start_char
    ]
    if not covered:
        return None
    return covered[0], covered[-1] + 1


def build_training_examples(
    ctx: AnnotatedContext,
    pairs: list[SyntheticQA],
    vocab: Vocab,
    max_seq: int = DEFAULT_MAX_SEQ,
    stride: int = DEFAULT_STRIDE,
) -> list[TrainingExample]:
    """Window each pair; a pair trains in the first window that fully
    contains its answer span, and is dropped if no window does."""
    words = [t.text.lower() for t in ctx.tokens]
    token_ids = vocab.encode(words)
    windows = split_windows(len(ctx.tokens), max_seq, stride)
    out = []
    for pair in pairs:
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
        out.append(
            TrainingExample(
                window_ids=token_ids[home.start:home.end],
                question_ids=vocab.encode_text(pair.question),
                answer_start=start_tok - home.start,
                answer_stop=end_tok - 1 - home.start,
            )
        )
    return out


# --------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(
    model: SpanModel, optim: OptimState, path: str | Path, seed: int = 0,
) -> None:
    """Versioned header line (JSON), then parameters and Adam moments as raw
    little-endian float64 in the declared order."""
    header = {
        "format": "ttlqa-checkpoint",
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "d": model.d,
        "vocab_size": len(model.vocab),
        "p_max": model.p_max,
        "seed": seed,
        "vocab": list(model.vocab.tokens),
        "optimizer": {
            "lr": optim.lr,
            "beta1": optim.beta1,
            "beta2": optim.beta2,
            "eps": optim.eps,
            "step": optim.step,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8"))
        fh.write(b"\n")
        for arr in model.parameters() + optim.m + optim.v:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(
    path: str | Path, expect_d: int | None = None,
) -> tuple[SpanModel, OptimState]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: invalid checkpoint header") from exc
    if header.get("format") != "ttlqa-checkpoint":
        raise ParseError(f"{path}: not a checkpoint file")
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParseError(
            f"{path}: unsupported checkpoint version "
            f"{header.get('format_version')!r}"
        )
    d = header["d"]
    if expect_d is not None and expect_d != d:
        raise UsageError(
            f"checkpoint dimension {d} does not match configured {expect_d}"
        )
    tokens = tuple(header["vocab"])
    vocab = Vocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)})
    v, p_max = len(tokens), header["p_max"]
    shapes = [(v, d), (p_max, d), (d, d), (d, d), (d,), (d,)]
    flat = np.frombuffer(blob, dtype="<f8")
    sizes = [int(np.prod(s)) for s in shapes]
    if len(flat) != 3 * sum(sizes):
        raise ParseError(f"{path}: parameter payload has wrong length")

    def take(offset: int) -> list[np.ndarray]:
        arrays = []
        for shape, size in zip(shapes, sizes):
            arrays.append(flat[offset:offset + size].reshape(shape).copy())
            offset += size
        return arrays

    params = take(0)
    moments_m = take(sum(sizes))
    moments_v = take(2 * sum(sizes))
    model = SpanModel(
        vocab=vocab, d=d, p_max=p_max,
        emb=params[0], pos=params[1], w_start=params[2], w_stop=params[3],
        b_start=params[4], b_stop=params[5],
    )
    opt_meta = header["optimizer"]
    optim = OptimState(
        lr=opt_meta["lr"], beta1=opt_meta["beta1"], beta2=opt_meta["beta2"],
        eps=opt_meta["eps"], step=opt_meta["step"],
        m=moments_m, v=moments_v,
    )
    return model, optim


# --------------------------------------------------------------------------
# Pretraining


def pretrain(
    contexts,
    steps: int,
    seed: int,
    d: int = 32,
    lr: float = 1e-3,
    batch_size: int = 32,
    methods=DEFAULT_METHODS,
    qa_cap: int = DEFAULT_QA_CAP,
    order=RANDOM_SHUFFLED,
    max_seq: int = DEFAULT_MAX_SEQ,
    stride: int = DEFAULT_STRIDE,
    p_max: int | None = None,
) -> tuple[SpanModel, OptimState, dict]:
    """Train features and head jointly on pooled synthetic pairs.

    With steps=0 the returned model is exactly the seeded initialization.
    """
    contexts = list(contexts)
    pairs = assemble_pooled_training_set(
        contexts, methods=methods, cap=qa_cap, order=order, seed=seed,
    )
    vocab = build_vocab(contexts)
    model = init_model(vocab, d, seed, p_max=p_max or max_seq)
    optim = OptimState.for_model(model, lr=lr)

    by_ctx: dict[str, list[SyntheticQA]] = {}
    for pair in pairs:
        by_ctx.setdefault(pair.context_id, []).append(pair)
    examples: list[TrainingExample] = []
    for ctx in contexts:
        examples.extend(
            build_training_examples(
                ctx, by_ctx.get(ctx.id, []), vocab, max_seq, stride
            )
        )
    if not examples:
        raise DataError("pretraining produced no trainable examples")

    rng = np.random.default_rng(seed)
    losses = []
    for batch in iterate_batches(examples, batch_size, steps, rng):
        losses.append(train_step(model, optim, batch))
    stats = {
        "pairs": len(pairs),
        "examples": len(examples),
        "steps": len(losses),
        "final_loss": losses[-1] if losses else None,
    }
    return model, optim, stats


def iterate_batches(
    examples: list[TrainingExample],
    batch_size: int,
    steps: int,
    rng: np.random.Generator | None,
):
    """Yield `steps` batches; epochs sample without replacement and reshuffle
    (rng=None keeps the sequential order every epoch, for curricula)."""
    if not examples:
        raise DataError("no examples to batch")
    queue: list[TrainingExample] = []
    for _ in range(steps):
        while len(queue) < batch_size:
            epoch = list(examples)
            if rng is not None:
                perm = rng.permutation(len(epoch))
                epoch = [epoch[i] for i in perm]
            queue.extend(epoch)
        yield queue[:batch_size]
        del queue[:batch_size]
