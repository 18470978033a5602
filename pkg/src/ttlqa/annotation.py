"""Annotated-passage data model, interchange I/O, and a heuristic annotator.

The annotation layer is the substrate every generator consumes: a passage
plus tokens, sentence boundaries, entity spans, and (optionally) per-sentence
dependency trees and semantic-role frames.  Values are immutable; loaders are
pure functions, so contexts can be shared freely across workers.

Conventions:
  * character offsets are Unicode codepoint offsets into ``text``;
  * token indices are document-global except dependency heads, which are
    sentence-local (``-1`` marks the root);
  * entity labels are restricted to ``ENTITY_LABELS``; SRL roles to
    ``SRL_ROLES`` (others are dropped on ingest with a warning).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ParseError, ValidationError

logger = logging.getLogger(__name__)

ENTITY_LABELS = ("PERSON", "LOCATION", "TEMPORAL", "NUMERIC", "THING")
SRL_ROLES = ("ARG0", "ARG1", "ARG2", "ARGM-LOC", "ARGM-TMP")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_SENT_TERMINALS = {".", "!", "?"}

MONTH_WORDS = frozenset(
    w.lower()
    for w in (
        "January", "February", "March", "April", "May", "June", "July",
        "August", "September", "October", "November", "December",
    )
)

# Prepositions that make a short number read as a point in time ("in 911").
TEMPORAL_PREPOSITIONS = frozenset(
    {"in", "on", "since", "until", "before", "after", "during", "by"}
)

# Capitalized tokens that are ordinary function words when sentence-initial.
_CAP_FUNCTION_WORDS = frozenset(
    {
        "A", "An", "The", "This", "That", "These", "Those", "It", "Its",
        "He", "His", "She", "Her", "They", "Their", "We", "Our", "I", "My",
        "You", "Your", "Who", "Whom", "Whose", "What", "Where", "When",
        "Why", "How", "Which", "In", "On", "At", "By", "For", "To", "From",
        "Of", "With", "Without", "But", "And", "Or", "Nor", "If", "As",
        "So", "Not", "No", "Yes", "There", "Here", "Some", "Any", "All",
        "Each", "Every", "Both", "Few", "Many", "Most", "Other", "Such",
        "Only", "Then", "Once", "While", "Because", "Although", "However",
        "Therefore", "Moreover", "Meanwhile", "Perhaps", "Today", "After",
        "Before", "During", "Since", "Until",
    }
)

# Small bundled gazetteers used by the heuristic annotator.  The planted-fact
# benchmark generator samples its people and places from these same lists so
# heuristic annotation recovers the planted entities exactly.
PERSON_LEXICON = frozenset(
    {
        "Marie", "Boris", "Clara", "Rollo", "Herleva", "Kim", "Ana", "Omar",
        "Lena", "Igor", "Nadia", "Pablo", "Greta", "Hugo", "Iris", "Jonas",
        "Karim", "Laila", "Mikel", "Nora", "Oscar", "Petra", "Ravi", "Sofia",
        "Tariq", "Ulla", "Viktor", "Wanda", "Xenia", "Yusuf", "Zara", "Emil",
        "Dana", "Felix", "John", "Mary", "Tutu", "William", "Richard",
        "Anton", "Bruno", "Celia", "Dmitri", "Elena", "Farid", "Gina",
        "Henrik",
    }
)
LOCATION_LEXICON = frozenset(
    {
        "Denmark", "France", "Norway", "Iceland", "England", "Normandy",
        "Lyon", "Oslo", "Porto", "Turin", "Gdansk", "Malmo", "Bergen",
        "Nantes", "Leeds", "Bristol", "Ghent", "Basel", "Graz", "Split",
        "Varna", "Tartu", "Kiel", "Arles", "Dover", "Paris", "Rouen",
        "Washington", "China", "Darfur", "Wikipedia", "Cadiz", "Brno",
        "Pisa", "Linz", "Metz", "Bonn", "Riga", "Vaasa",
    }
)


@dataclass(frozen=True)
class Token:
    """A surface token with codepoint offsets into the passage text."""

    text: str
    start_char: int
    end_char: int


@dataclass(frozen=True)
class EntitySpan:
    """Token span ``[start_tok, end_tok)`` carrying one of ENTITY_LABELS."""

    start_tok: int
    end_tok: int
    label: str


@dataclass(frozen=True)
class DepTree:
    """Per-sentence dependency tree; heads are sentence-local, -1 = root."""

    sentence: int
    heads: tuple[int, ...]
    rels: tuple[str, ...]


@dataclass(frozen=True)
class SrlArg:
    role: str
    start_tok: int
    end_tok: int


@dataclass(frozen=True)
class SrlFrame:
    """A predicate token plus its labeled argument spans (global indices)."""

    pred: int
    args: tuple[SrlArg, ...]


@dataclass(frozen=True)
class AnnotatedContext:
    id: str
    text: str
    tokens: tuple[Token, ...]
    sentences: tuple[tuple[int, int], ...]
    entities: tuple[EntitySpan, ...] = ()
    dep: tuple[DepTree, ...] = ()
    srl: tuple[SrlFrame, ...] = ()

    def sentence_of_token(self, tok: int) -> int:
        for s, (lo, hi) in enumerate(self.sentences):
            if lo <= tok < hi:
                return s
        raise IndexError(f"token index {tok} outside all sentences")

    def entity_char_span(self, ent: EntitySpan) -> tuple[int, int]:
        return (self.tokens[ent.start_tok].start_char,
                self.tokens[ent.end_tok - 1].end_char)

    def span_text(self, start_tok: int, end_tok: int) -> str:
        return self.text[self.tokens[start_tok].start_char:
                         self.tokens[end_tok - 1].end_char]


@dataclass(frozen=True)
class GoldAnswer:
    text: str
    answer_start: int


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    answers: tuple[GoldAnswer, ...]


@dataclass(frozen=True)
class Corpus:
    """Contexts plus human-authored questions keyed by context id."""

    contexts: tuple[AnnotatedContext, ...]
    questions: dict[str, tuple[Question, ...]] = field(default_factory=dict)

    def context_by_id(self, ctx_id: str) -> AnnotatedContext:
        for ctx in self.contexts:
            if ctx.id == ctx_id:
                return ctx
        raise KeyError(ctx_id)

    def all_questions(self) -> list[tuple[str, Question]]:
        out = []
        for ctx in self.contexts:
            for q in self.questions.get(ctx.id, ()):
                out.append((ctx.id, q))
        return out


def tokenize(text: str) -> tuple[Token, ...]:
    """Whitespace+punctuation tokenization: word runs or single punctuation."""
    return tuple(
        Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)
    )


def split_sentences(tokens: tuple[Token, ...]) -> tuple[tuple[int, int], ...]:
    """Partition the token range into sentences ending at ``. ! ?`` tokens."""
    sentences = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok.text in _SENT_TERMINALS:
            sentences.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        sentences.append((start, len(tokens)))
    return tuple(sentences)


def _is_capitalized_word(text: str) -> bool:
    return text[0].isupper() and text.isalpha()


def _numeric_label(tokens, idx) -> str | None:
    text = tokens[idx].text
    if not text.isdigit():
        if text.lower() in MONTH_WORDS and text[0].isupper():
            return "TEMPORAL"
        return None
    if len(text) == 4:
        return "TEMPORAL"
    if idx > 0 and tokens[idx - 1].text.lower() in TEMPORAL_PREPOSITIONS:
        return "TEMPORAL"
    return "NUMERIC"


def _label_capitalized_run(words: list[str]) -> str:
    if any(w in PERSON_LEXICON for w in words):
        return "PERSON"
    if any(w in LOCATION_LEXICON for w in words):
        return "LOCATION"
    return "THING"


def heuristic_annotate(ctx_id: str, text: str) -> AnnotatedContext:
    """Deterministic rule-based annotation for fixtures and raw passages.

    Entities: month words and year-like numbers are TEMPORAL, other digit
    tokens NUMERIC, capitalized runs PERSON/LOCATION per the bundled
    lexicons and THING otherwise.  A sentence-initial capitalized token
    joins a run only when it is not a common function word, so proper nouns
    opening a sentence are kept.  Dependency trees and SRL frames are left
    empty; loaders or the bridge supply those.
    """
    if not text:
        raise DataError("cannot annotate empty text")
    tokens = tokenize(text)
    if not tokens:
        raise DataError("text contains no tokens")
    sentences = split_sentences(tokens)

    entities: list[EntitySpan] = []
    for lo, hi in sentences:
        i = lo
        while i < hi:
            label = _numeric_label(tokens, i)
            if label is not None:
                entities.append(EntitySpan(i, i + 1, label))
                i += 1
                continue
            word = tokens[i].text
            if _is_capitalized_word(word) and not (
                i == lo and word in _CAP_FUNCTION_WORDS
            ):
                j = i + 1
                while j < hi and _is_capitalized_word(tokens[j].text):
                    j += 1
                run = [tokens[k].text for k in range(i, j)]
                entities.append(EntitySpan(i, j, _label_capitalized_run(run)))
                i = j
                continue
            i += 1
    return AnnotatedContext(
        id=ctx_id,
        text=text,
        tokens=tokens,
        sentences=sentences,
        entities=tuple(entities),
    )


# --------------------------------------------------------------------------
# Validation


def _check_tree(heads: tuple[int, ...]) -> str | None:
    """Return a defect description for a head array, or None if a tree."""
    n = len(heads)
    roots = [i for i, h in enumerate(heads) if h == -1]
    if len(roots) != 1:
        return f"expected exactly one root, found {len(roots)}"
    for i, h in enumerate(heads):
        if h != -1 and not (0 <= h < n):
            return f"token {i} has out-of-range head {h}"
    # Walk each token toward the root; revisiting a node means a cycle.
    for i in range(n):
        seen = set()
        cur = i
        while heads[cur] != -1:
            if cur in seen:
                return f"cycle through token {cur}"
            seen.add(cur)
            cur = heads[cur]
    return None


def validate(ctx: AnnotatedContext) -> list[str]:
    """Check every type invariant; return one entry per violation."""
    report: list[str] = []
    n = len(ctx.tokens)

    prev_end = 0
    for i, tok in enumerate(ctx.tokens):
        if tok.start_char >= tok.end_char:
            report.append(f"token {i}: empty or inverted char span")
        if tok.start_char < prev_end:
            report.append(f"token {i}: overlaps previous token")
        if ctx.text[tok.start_char:tok.end_char] != tok.text:
            report.append(f"token {i}: text does not match char slice")
        prev_end = max(prev_end, tok.end_char)

    pos = 0
    for s, (lo, hi) in enumerate(ctx.sentences):
        if lo != pos:
            report.append(f"sentence {s}: starts at {lo}, expected {pos}")
        if hi <= lo:
            report.append(f"sentence {s}: empty range")
        pos = hi
    if n and pos != n:
        report.append(f"sentences cover {pos} of {n} tokens")

    for e, ent in enumerate(ctx.entities):
        if ent.label not in ENTITY_LABELS:
            report.append(f"entity {e}: unknown label {ent.label!r}")
        if not (0 <= ent.start_tok < ent.end_tok <= n):
            report.append(f"entity {e}: span ({ent.start_tok}, {ent.end_tok}) "
                          f"out of range")
            continue
        in_one = any(lo <= ent.start_tok and ent.end_tok <= hi
                     for lo, hi in ctx.sentences)
        if not in_one:
            report.append(f"entity {e}: crosses a sentence boundary")

    if ctx.dep and len(ctx.dep) != len(ctx.sentences):
        report.append(f"dep has {len(ctx.dep)} trees for "
                      f"{len(ctx.sentences)} sentences")
    for tree in ctx.dep:
        s = tree.sentence
        if not (0 <= s < len(ctx.sentences)):
            report.append(f"dep tree references unknown sentence {s}")
            continue
        lo, hi = ctx.sentences[s]
        if len(tree.heads) != hi - lo or len(tree.rels) != hi - lo:
            report.append(f"sentence {s}: dep arrays sized "
                          f"{len(tree.heads)} for {hi - lo} tokens")
            continue
        defect = _check_tree(tree.heads)
        if defect:
            report.append(f"sentence {s}: {defect}")

    for f, frame in enumerate(ctx.srl):
        if not (0 <= frame.pred < n):
            report.append(f"frame {f}: predicate index out of range")
            continue
        s = ctx.sentence_of_token(frame.pred)
        lo, hi = ctx.sentences[s]
        spans = []
        for a, arg in enumerate(frame.args):
            if arg.role not in SRL_ROLES:
                report.append(f"frame {f} arg {a}: unknown role {arg.role!r}")
            if not (lo <= arg.start_tok < arg.end_tok <= hi):
                report.append(f"frame {f} arg {a}: span outside "
                              f"predicate sentence {s}")
                continue
            spans.append((arg.start_tok, arg.end_tok))
        spans.sort()
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            if s2 < e1:
                report.append(f"frame {f}: overlapping argument spans")
                break
    return report


# --------------------------------------------------------------------------
# Interchange format I/O


def context_to_dict(ctx: AnnotatedContext) -> dict:
    return {
        "id": ctx.id,
        "text": ctx.text,
        "tokens": [
            {"text": t.text, "start": t.start_char, "end": t.end_char}
            for t in ctx.tokens
        ],
        "sentences": [
            {"start_tok": lo, "end_tok": hi} for lo, hi in ctx.sentences
        ],
        "entities": [
            {"start_tok": e.start_tok, "end_tok": e.end_tok, "label": e.label}
            for e in ctx.entities
        ],
        "dep": [
            [{"head": h, "rel": r} for h, r in zip(tree.heads, tree.rels)]
            for tree in ctx.dep
        ],
        "srl": [
            {
                "pred": fr.pred,
                "args": [
                    {"role": a.role, "start_tok": a.start_tok,
                     "end_tok": a.end_tok}
                    for a in fr.args
                ],
            }
            for fr in ctx.srl
        ],
    }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    return obj[key]


def context_from_dict(obj: dict, where: str = "context") -> AnnotatedContext:
    ctx_id = _require(obj, "id", where)
    text = _require(obj, "text", where)
    tokens = tuple(
        Token(
            _require(t, "text", f"{where}.tokens[{i}]"),
            _require(t, "start", f"{where}.tokens[{i}]"),
            _require(t, "end", f"{where}.tokens[{i}]"),
        )
        for i, t in enumerate(_require(obj, "tokens", where))
    )
    sentences = tuple(
        (_require(s, "start_tok", f"{where}.sentences[{i}]"),
         _require(s, "end_tok", f"{where}.sentences[{i}]"))
        for i, s in enumerate(_require(obj, "sentences", where))
    )
    entities = tuple(
        EntitySpan(
            _require(e, "start_tok", f"{where}.entities[{i}]"),
            _require(e, "end_tok", f"{where}.entities[{i}]"),
            _require(e, "label", f"{where}.entities[{i}]"),
        )
        for i, e in enumerate(_require(obj, "entities", where))
    )
    dep = tuple(
        DepTree(
            sentence=s,
            heads=tuple(_require(a, "head", f"{where}.dep[{s}][{i}]")
                        for i, a in enumerate(arcs)),
            rels=tuple(_require(a, "rel", f"{where}.dep[{s}][{i}]")
                       for i, a in enumerate(arcs)),
        )
        for s, arcs in enumerate(_require(obj, "dep", where))
    )
    frames = []
    for i, fr in enumerate(_require(obj, "srl", where)):
        args = []
        for j, a in enumerate(_require(fr, "args", f"{where}.srl[{i}]")):
            role = _require(a, "role", f"{where}.srl[{i}].args[{j}]")
            if role not in SRL_ROLES:
                logger.warning("%s.srl[%d].args[%d]: dropping role %r",
                               where, i, j, role)
                continue
            args.append(SrlArg(role, a["start_tok"], a["end_tok"]))
        frames.append(SrlFrame(_require(fr, "pred", f"{where}.srl[{i}]"),
                               tuple(args)))
    return AnnotatedContext(
        id=ctx_id, text=text, tokens=tokens, sentences=sentences,
        entities=entities, dep=dep, srl=tuple(frames),
    )


def load_annotations(path: str | Path) -> list[AnnotatedContext]:
    """Load and validate an interchange file; contexts in file order."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: top level must be an array of contexts")
    contexts = []
    for i, obj in enumerate(data):
        ctx = context_from_dict(obj, where=f"contexts[{i}]")
        violations = validate(ctx)
        if violations:
            raise ValidationError(
                f"{path}: contexts[{i}] (id={ctx.id!r}): "
                + "; ".join(violations)
            )
        contexts.append(ctx)
    return contexts


def save_annotations(contexts, path: str | Path) -> None:
    payload = [context_to_dict(c) for c in contexts]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8"
    )


# --------------------------------------------------------------------------
# SQuAD v1.1 loading


def load_squad_dataset(path: str | Path) -> Corpus:
    """Load a SQuAD-v1.1-format file into a heuristically annotated Corpus.

    One context per paragraph; gold answers are preserved verbatim,
    duplicates included.  Answer offsets are checked against the passage.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc

    articles = payload.get("data")
    if not isinstance(articles, list):
        raise ParseError("data: missing or not an array")

    contexts: list[AnnotatedContext] = []
    questions: dict[str, tuple[Question, ...]] = {}
    used_ids: set[str] = set()
    for i, article in enumerate(articles):
        if not isinstance(article, dict):
            raise ParseError(f"data[{i}]: not an object")
        paragraphs = article.get("paragraphs")
        if not isinstance(paragraphs, list):
            raise ParseError(f"data[{i}].paragraphs: missing or not an array")
        title = article.get("title", f"article{i}")
        for j, para in enumerate(paragraphs):
            where = f"data[{i}].paragraphs[{j}]"
            if "context" not in para:
                raise ParseError(f"{where}.context: missing")
            text = para["context"]
            ctx_id = f"{title}_p{j}"
            if ctx_id in used_ids:
                ctx_id = f"{title}_p{j}_{len(used_ids)}"
            used_ids.add(ctx_id)
            ctx = heuristic_annotate(ctx_id, text)
            contexts.append(ctx)

            qas = para.get("qas")
            if not isinstance(qas, list):
                raise ParseError(f"{where}.qas: missing or not an array")
            qlist = []
            for k, qa in enumerate(qas):
                qwhere = f"{where}.qas[{k}]"
                if "question" not in qa:
                    raise ParseError(f"{qwhere}.question: missing")
                qid = qa.get("id", f"{ctx_id}:{k}")
                answers = qa.get("answers")
                if not isinstance(answers, list):
                    raise ParseError(f"{qwhere}.answers: missing or not an "
                                     f"array")
                golds = []
                for a in answers:
                    if "text" not in a or "answer_start" not in a:
                        raise ParseError(f"{qwhere}.answers: entries need "
                                         f"text and answer_start")
                    start = a["answer_start"]
                    atext = a["text"]
                    if start < 0 or text[start:start + len(atext)] != atext:
                        raise ValidationError(
                            f"question {qid!r}: answer_start {start} does "
                            f"not point at {atext!r}"
                        )
                    golds.append(GoldAnswer(atext, start))
                qlist.append(Question(qid, qa["question"], tuple(golds)))
            questions[ctx_id] = tuple(qlist)
    return Corpus(contexts=tuple(contexts), questions=questions)
