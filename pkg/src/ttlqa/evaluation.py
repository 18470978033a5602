"""Answer normalization and macro EM / macro F1 scoring.

Follows the standard extractive-QA scoring rules: answers are lowercased,
stripped of punctuation and the articles a/an/the, and whitespace-collapsed
before comparison; F1 is multiset token overlap, maximized over gold answers.
"""

from __future__ import annotations

import csv
import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .annotation import Corpus
from .errors import DataError

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, drop whole-word articles, collapse space."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(pred: str, golds: list[str] | tuple[str, ...]) -> int:
    if not golds:
        raise DataError("exact_match requires at least one gold answer")
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(g) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: list[str] | tuple[str, ...]) -> float:
    """Best token-multiset F1 of the prediction against any gold answer."""
    if not golds:
        raise DataError("f1 requires at least one gold answer")
    pred_tokens = normalize_answer(pred).split()
    return max(
        _f1_single(pred_tokens, normalize_answer(g).split()) for g in golds
    )


@dataclass(frozen=True)
class QuestionScore:
    question_id: str
    context_id: str
    prediction: str
    em: int
    f1: float


@dataclass(frozen=True)
class EvalReport:
    """Per-question scores plus unweighted macro means (fractions in [0,1])."""

    scores: tuple[QuestionScore, ...]
    macro_em: float
    macro_f1: float
    by_context: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def macro_em_pct(self) -> float:
        return 100.0 * self.macro_em

    @property
    def macro_f1_pct(self) -> float:
        return 100.0 * self.macro_f1

    def to_dict(self) -> dict:
        return {
            "macro_em": self.macro_em,
            "macro_f1": self.macro_f1,
            "by_context": {k: list(v) for k, v in self.by_context.items()},
            "questions": [
                {
                    "id": s.question_id,
                    "context_id": s.context_id,
                    "prediction": s.prediction,
                    "em": s.em,
                    "f1": s.f1,
                }
                for s in self.scores
            ],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1),
                              encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["question_id", "context_id", "prediction",
                             "em", "f1"])
            for s in self.scores:
                writer.writerow([s.question_id, s.context_id, s.prediction,
                                 s.em, f"{s.f1:.6f}"])

    def summary_table(self) -> str:
        lines = [
            f"{'context':<28} {'questions':>9} {'EM%':>7} {'F1%':>7}",
        ]
        counts = Counter(s.context_id for s in self.scores)
        for cid, (em, f1v) in sorted(self.by_context.items()):
            lines.append(
                f"{cid:<28} {counts[cid]:>9} {100 * em:>7.2f} "
                f"{100 * f1v:>7.2f}"
            )
        lines.append(
            f"{'MACRO':<28} {len(self.scores):>9} "
            f"{self.macro_em_pct:>7.2f} {self.macro_f1_pct:>7.2f}"
        )
        return "\n".join(lines)


def evaluate(predictions: dict[str, str], corpus: Corpus) -> EvalReport:
    """Score one prediction per gold question; macros are question means."""
    wanted = corpus.all_questions()
    missing = [q.id for _, q in wanted if q.id not in predictions]
    if missing:
        raise DataError(
            "missing predictions for question ids: " + ", ".join(missing)
        )
    scores = []
    for ctx_id, question in wanted:
        pred = predictions[question.id]
        golds = [g.text for g in question.answers]
        scores.append(
            QuestionScore(
                question_id=question.id,
                context_id=ctx_id,
                prediction=pred,
                em=exact_match(pred, golds),
                f1=f1(pred, golds),
            )
        )
    if not scores:
        raise DataError("corpus contains no questions to evaluate")
    by_context: dict[str, tuple[float, float]] = {}
    for ctx_id in {s.context_id for s in scores}:
        mine = [s for s in scores if s.context_id == ctx_id]
        by_context[ctx_id] = (
            sum(s.em for s in mine) / len(mine),
            sum(s.f1 for s in mine) / len(mine),
        )
    return EvalReport(
        scores=tuple(scores),
        macro_em=sum(s.em for s in scores) / len(scores),
        macro_f1=sum(s.f1 for s in scores) / len(scores),
        by_context=by_context,
    )
