"""Rule-based question-answer pair generation and training-set assembly.

Four generators over an annotated context, each tagged with a method name:

  * ``CLOZE`` / ``CLOZE_TRANSLATED`` — entity masked by a category token,
    then rewritten into a wh-fronted question;
  * ``TEMPLATE`` — for a sentence ``[A][answer][B]``, the question
    ``Wh + B + A + ?``;
  * ``DEP_PARSE`` — dependency-tree reconstruction: prune the answer's left
    children, bubble the answer-bearing child to the front at each ancestor,
    linearize, substitute the wh-word;
  * ``QA_SRL`` — role-conditioned templates over SRL frames, with other
    participants reduced to "someone"/"something".

All generators are pure functions of the context; randomness enters only in
``assemble_training_set`` through its seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotation import AnnotatedContext, EntitySpan
from .errors import DataError, NoTrainablePairsError

logger = logging.getLogger(__name__)

CLOZE = "CLOZE"
CLOZE_TRANSLATED = "CLOZE_TRANSLATED"
TEMPLATE = "TEMPLATE"
DEP_PARSE = "DEP_PARSE"
QA_SRL = "QA_SRL"
METHODS = (CLOZE, CLOZE_TRANSLATED, TEMPLATE, DEP_PARSE, QA_SRL)
DEFAULT_METHODS = (CLOZE_TRANSLATED, TEMPLATE, DEP_PARSE, QA_SRL)

RANDOM_SHUFFLED = "RANDOM_SHUFFLED"
CURRICULUM_METHODS = (QA_SRL, TEMPLATE, DEP_PARSE)

DEFAULT_QA_CAP = 4000
DEFAULT_METHOD_QUOTA = 1000

MASK_TOKENS = {
    "PERSON": "[PERSON]",
    "LOCATION": "[LOCATION]",
    "TEMPORAL": "[TEMPORAL]",
    "NUMERIC": "[NUMERIC]",
    "THING": "[THING]",
}
WH_WORDS = {
    "PERSON": "Who",
    "LOCATION": "Where",
    "TEMPORAL": "When",
    "NUMERIC": "How many",
    "THING": "What",
}

_PUNCT = {".", "!", "?", ",", ";", ":"}
_PREPOSITIONS = frozenset(
    {"from", "to", "in", "on", "at", "with", "for", "by", "of", "as",
     "into", "onto", "over", "under", "about", "through", "against"}
)


@dataclass(frozen=True)
class ClozeQuestion:
    """A sentence with one entity span replaced by its category mask."""

    sentence: int
    tokens: tuple[str, ...]
    answer_start_tok: int           # global token indices into the context
    answer_end_tok: int
    answer_text: str
    mask: str

    @property
    def mask_index(self) -> int:
        return self.tokens.index(self.mask)


@dataclass(frozen=True)
class SyntheticQA:
    question: str
    answer_text: str
    start_char: int
    end_char: int
    method: str
    context_id: str

    def span(self) -> tuple[int, int]:
        return (self.start_char, self.end_char)


def _entities_in_sentence(ctx: AnnotatedContext, lo: int, hi: int):
    return [e for e in ctx.entities if lo <= e.start_tok and e.end_tok <= hi]


def _char_span(ctx: AnnotatedContext, start_tok: int,
               end_tok: int) -> tuple[int, int, str]:
    start = ctx.tokens[start_tok].start_char
    end = ctx.tokens[end_tok - 1].end_char
    return start, end, ctx.text[start:end]


def _in_entity(ctx: AnnotatedContext, tok: int) -> bool:
    return any(e.start_tok <= tok < e.end_tok for e in ctx.entities)


def generate_clozes(ctx: AnnotatedContext) -> list[ClozeQuestion]:
    """One cloze per (sentence, entity) pair, mask chosen by entity label."""
    clozes = []
    for s, (lo, hi) in enumerate(ctx.sentences):
        for ent in _entities_in_sentence(ctx, lo, hi):
            mask = MASK_TOKENS[ent.label]
            tokens = (
                [t.text for t in ctx.tokens[lo:ent.start_tok]]
                + [mask]
                + [t.text for t in ctx.tokens[ent.end_tok:hi]]
            )
            _, _, answer_text = _char_span(ctx, ent.start_tok, ent.end_tok)
            clozes.append(
                ClozeQuestion(
                    sentence=s,
                    tokens=tuple(tokens),
                    answer_start_tok=ent.start_tok,
                    answer_end_tok=ent.end_tok,
                    answer_text=answer_text,
                    mask=mask,
                )
            )
    return clozes


def demask(ctx: AnnotatedContext, cloze: ClozeQuestion) -> tuple[str, ...]:
    """Re-insert the answer tokens; must reproduce the source sentence."""
    i = cloze.mask_index
    answer = [t.text for t in
              ctx.tokens[cloze.answer_start_tok:cloze.answer_end_tok]]
    return cloze.tokens[:i] + tuple(answer) + cloze.tokens[i + 1:]


def cloze_as_pair(ctx: AnnotatedContext, cloze: ClozeQuestion) -> SyntheticQA:
    """The untranslated cloze statement itself as a training pair."""
    start, end, text = _char_span(ctx, cloze.answer_start_tok,
                                  cloze.answer_end_tok)
    return SyntheticQA(
        question=" ".join(cloze.tokens),
        answer_text=text,
        start_char=start,
        end_char=end,
        method=CLOZE,
        context_id=ctx.id,
    )


def translate_cloze_rule(
    ctx: AnnotatedContext, cloze: ClozeQuestion
) -> SyntheticQA:
    """Wh-front the cloze: drop the mask, prepend the category wh-word, keep
    the remaining tokens in order, and end with "?".

    The former sentence-initial token is lowercased when the mask is not at
    the front, unless it belongs to an entity (proper names keep their case).
    """
    category = cloze.mask.strip("[]")
    wh = WH_WORDS[category]
    i = cloze.mask_index
    remaining = list(cloze.tokens[:i] + cloze.tokens[i + 1:])
    if remaining and i > 0:
        lo, _ = ctx.sentences[cloze.sentence]
        if not _in_entity(ctx, lo):
            remaining[0] = remaining[0].lower()
    while remaining and remaining[-1] in _PUNCT:
        remaining.pop()
    body = " ".join(remaining)
    question = f"{wh} {body}?" if body else f"{wh}?"
    start, end, text = _char_span(ctx, cloze.answer_start_tok,
                                  cloze.answer_end_tok)
    return SyntheticQA(
        question=question,
        answer_text=text,
        start_char=start,
        end_char=end,
        method=CLOZE_TRANSLATED,
        context_id=ctx.id,
    )


def generate_template_questions(ctx: AnnotatedContext) -> list[SyntheticQA]:
    """For each entity in a sentence [A][answer][B], emit ``Wh + B + A + ?``
    with each fragment's trailing punctuation stripped."""
    out = []
    for lo, hi in ctx.sentences:
        for ent in _entities_in_sentence(ctx, lo, hi):
            fragment_a = [t.text for t in ctx.tokens[lo:ent.start_tok]]
            fragment_b = [t.text for t in ctx.tokens[ent.end_tok:hi]]
            for frag in (fragment_a, fragment_b):
                while frag and frag[-1] in _PUNCT:
                    frag.pop()
            wh = WH_WORDS[ent.label]
            body = " ".join(fragment_b + fragment_a)
            start, end, text = _char_span(ctx, ent.start_tok, ent.end_tok)
            out.append(
                SyntheticQA(
                    question=f"{wh} {body}?" if body else f"{wh}?",
                    answer_text=text,
                    start_char=start,
                    end_char=end,
                    method=TEMPLATE,
                    context_id=ctx.id,
                )
            )
    return out


# --------------------------------------------------------------------------
# Dependency-parse question generation


def depparse_traversal_tokens(
    ctx: AnnotatedContext, sentence: int, ent: EntitySpan
) -> list[str] | None:
    """Run the three reconstruction steps and return the linearized tokens
    (mask included), or None when the entity cannot anchor a question.

    Linearization is positional: a node emits its earlier-position children,
    itself, then its later-position children.  The answer-fronting step
    overrides this on the answer's ancestor path, where the answer-bearing
    child is emitted first, the ancestor immediately after, and the other
    children afterwards in sentence order.  The mask therefore always opens
    the output.
    """
    lo, hi = ctx.sentences[sentence]
    tree = ctx.dep[sentence]
    n = hi - lo
    span = range(ent.start_tok - lo, ent.end_tok - lo)
    span_set = set(span)

    children: list[list[int]] = [[] for _ in range(n)]
    root = -1
    for i, head in enumerate(tree.heads):
        if head == -1:
            root = i
        else:
            children[head].append(i)

    anchors = [i for i in span if tree.heads[i] == -1
               or tree.heads[i] not in span_set]
    if not anchors:
        return None
    anchor = anchors[0]

    # Step 1: children of span tokens keep only the right side of the span.
    mask_children = sorted(
        c for i in span for c in children[i]
        if c not in span_set and c >= ent.end_tok - lo
    )

    # Step 2: record, for each ancestor of the anchor, which child leads
    # to the answer; that child is traversed first.
    fronted: dict[int, int] = {}
    node = anchor
    while tree.heads[node] != -1:
        parent = tree.heads[node]
        fronted[parent] = node
        node = parent

    def emit(node: int, acc: list[str]) -> None:
        if node == anchor:
            acc.append(MASK_TOKENS[ent.label])
            for child in mask_children:
                emit(child, acc)
            return
        kids = [c for c in children[node] if c not in span_set]
        if node in fronted:
            first = fronted[node]
            emit(first, acc)
            acc.append(ctx.tokens[lo + node].text)
            for child in kids:
                if child != first:
                    emit(child, acc)
        else:
            for child in kids:
                if child < node:
                    emit(child, acc)
            acc.append(ctx.tokens[lo + node].text)
            for child in kids:
                if child > node:
                    emit(child, acc)

    if root == -1:
        return None
    acc: list[str] = []
    emit(root if root not in span_set else anchor, acc)
    return acc


def generate_depparse_questions(ctx: AnnotatedContext) -> list[SyntheticQA]:
    if not ctx.dep:
        logger.debug("context %s: no dependency trees", ctx.id)
        return []
    out = []
    for s, (lo, hi) in enumerate(ctx.sentences):
        ents = _entities_in_sentence(ctx, lo, hi)
        if not ents:
            continue
        if s >= len(ctx.dep):
            logger.warning("context %s: no dependency tree for sentence %d, "
                           "skipping", ctx.id, s)
            continue
        for ent in ents:
            tokens = depparse_traversal_tokens(ctx, s, ent)
            if tokens is None:
                continue
            while tokens and tokens[-1] in _PUNCT:
                tokens.pop()
            mask = MASK_TOKENS[ent.label]
            words = [WH_WORDS[ent.label] if t == mask else t for t in tokens]
            start, end, text = _char_span(ctx, ent.start_tok, ent.end_tok)
            out.append(
                SyntheticQA(
                    question=" ".join(words) + "?",
                    answer_text=text,
                    start_char=start,
                    end_char=end,
                    method=DEP_PARSE,
                    context_id=ctx.id,
                )
            )
    return out


# --------------------------------------------------------------------------
# QA-SRL question generation


def _final_preposition(ctx: AnnotatedContext, start_tok: int,
                       end_tok: int) -> str | None:
    for i in range(end_tok - 1, start_tok - 1, -1):
        if ctx.tokens[i].text.lower() in _PREPOSITIONS:
            return ctx.tokens[i].text.lower()
    return None


def _person_overlaps(ctx: AnnotatedContext, start_tok: int,
                     end_tok: int) -> bool:
    return any(
        e.label == "PERSON"
        and e.start_tok < end_tok and start_tok < e.end_tok
        for e in ctx.entities
    )


def generate_qasrl_questions(ctx: AnnotatedContext) -> list[SyntheticQA]:
    """One question per (frame, argument) from the role-template table."""
    out = []
    for frame in ctx.srl:
        pred = ctx.tokens[frame.pred].text
        roles = {a.role for a in frame.args}
        for arg in frame.args:
            if arg.role == "ARG0":
                wh = ("Who" if _person_overlaps(ctx, arg.start_tok,
                                                arg.end_tok) else "What")
                question = f"{wh} {pred}?"
            elif arg.role == "ARG1":
                if "ARG0" in roles:
                    question = f"What did someone {pred}?"
                else:
                    question = f"What {pred}?"
            elif arg.role == "ARG2":
                prep = _final_preposition(ctx, arg.start_tok, arg.end_tok)
                if prep:
                    question = f"What was someone {pred} {prep}?"
                else:
                    question = f"What was someone {pred}?"
            elif arg.role == "ARGM-LOC":
                question = f"Where did something {pred}?"
            elif arg.role == "ARGM-TMP":
                question = f"When did something {pred}?"
            else:                           # roles are validated on ingest
                continue
            start = ctx.tokens[arg.start_tok].start_char
            end = ctx.tokens[arg.end_tok - 1].end_char
            out.append(
                SyntheticQA(
                    question=question,
                    answer_text=ctx.text[start:end],
                    start_char=start,
                    end_char=end,
                    method=QA_SRL,
                    context_id=ctx.id,
                )
            )
    return out


# --------------------------------------------------------------------------
# Training-set assembly

_GENERATORS = {
    TEMPLATE: generate_template_questions,
    DEP_PARSE: generate_depparse_questions,
    QA_SRL: generate_qasrl_questions,
}


def generate_pairs(ctx: AnnotatedContext, methods=DEFAULT_METHODS
                   ) -> list[SyntheticQA]:
    """All pairs for the requested methods, deduplicated on
    (question, answer span), first occurrence kept."""
    pairs: list[SyntheticQA] = []
    for method in methods:
        if method not in METHODS:
            raise DataError(f"unknown generation method {method!r}")
        if method == CLOZE:
            pairs.extend(cloze_as_pair(ctx, c) for c in generate_clozes(ctx))
        elif method == CLOZE_TRANSLATED:
            pairs.extend(
                translate_cloze_rule(ctx, c) for c in generate_clozes(ctx)
            )
        else:
            pairs.extend(_GENERATORS[method](ctx))
    seen = set()
    unique = []
    for p in pairs:
        key = (p.question, p.start_char, p.end_char)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    return unique


def normalize_order(order) -> str | tuple[str, ...]:
    if order == RANDOM_SHUFFLED:
        return RANDOM_SHUFFLED
    order = tuple(order)
    if len(set(order)) != len(order):
        raise DataError("curriculum order repeats a method")
    for m in order:
        if m not in CURRICULUM_METHODS:
            raise DataError(f"method {m!r} cannot appear in a curriculum "
                            f"(choose from {CURRICULUM_METHODS})")
    return order


def _arrange(
    pairs: list[SyntheticQA],
    order,
    cap: int,
    quota: int,
    rng: np.random.Generator,
) -> list[SyntheticQA]:
    if order == RANDOM_SHUFFLED:
        perm = rng.permutation(len(pairs))
        return [pairs[i] for i in perm][:cap]
    arranged: list[SyntheticQA] = []
    for method in order:
        block = [p for p in pairs if p.method == method]
        perm = rng.permutation(len(block))
        arranged.extend([block[i] for i in perm][:quota])
    return arranged[:cap]


def assemble_training_set(
    ctx: AnnotatedContext,
    methods=DEFAULT_METHODS,
    cap: int = DEFAULT_QA_CAP,
    order=RANDOM_SHUFFLED,
    seed: int = 0,
    per_method_quota: int = DEFAULT_METHOD_QUOTA,
) -> list[SyntheticQA]:
    """Deduplicated pairs for one context, shuffled or in curriculum block
    order (blocks internally shuffled, truncated to the per-method quota),
    truncated to the global cap."""
    return assemble_pooled_training_set(
        [ctx], methods=methods, cap=cap, order=order, seed=seed,
        per_method_quota=per_method_quota,
    )


def assemble_pooled_training_set(
    contexts,
    methods=DEFAULT_METHODS,
    cap: int = DEFAULT_QA_CAP,
    order=RANDOM_SHUFFLED,
    seed: int = 0,
    per_method_quota: int = DEFAULT_METHOD_QUOTA,
) -> list[SyntheticQA]:
    """Pool per-context pairs (deduplication stays per-context), then apply
    ordering, per-method quotas, and the global cap to the pooled set."""
    if cap < 1:
        raise DataError("cap must be at least 1")
    order = normalize_order(order)
    pooled: list[SyntheticQA] = []
    for ctx in contexts:
        pooled.extend(generate_pairs(ctx, methods=methods))
    if not pooled:
        raise NoTrainablePairsError(
            "no trainable pairs: generation produced nothing for "
            + ", ".join(ctx.id for ctx in contexts)
        )
    rng = np.random.default_rng(seed)
    return _arrange(pooled, order, cap, per_method_quota, rng)


# --------------------------------------------------------------------------
# Pairs file I/O (one JSON object per line)


def write_pairs(pairs, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "context_id": p.context_id,
                "method": p.method,
                "question": p.question,
                "answer_text": p.answer_text,
                "start_char": p.start_char,
                "end_char": p.end_char,
            }, ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[SyntheticQA]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs.append(SyntheticQA(
                question=obj["question"],
                answer_text=obj["answer_text"],
                start_char=obj["start_char"],
                end_char=obj["end_char"],
                method=obj["method"],
                context_id=obj["context_id"],
            ))
    return pairs
