"""Annotation backends.

``SpacyBackend`` wraps an installed spaCy pipeline (NER and dependency
parse from the model, roles derived from the parse).  ``BuiltinBackend``
is a dependency-free deterministic rule pipeline that covers the same
surface: gazetteer NER with spaCy-style tags, a head-attachment dependency
parser that always yields a single-rooted acyclic tree, and pattern-based
role frames.  Both emit the same intermediate structure; the exporter maps
tags onto the interchange label sets.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_SENT_TERMINALS = {".", "!", "?"}


@dataclass(frozen=True)
class RawToken:
    text: str
    start: int
    end: int


@dataclass
class RawAnnotation:
    """Backend output before label mapping; token indices are global,
    dependency heads sentence-local with -1 at the root."""

    tokens: list[RawToken]
    sentences: list[tuple[int, int]]
    entities: list[tuple[int, int, str]] = field(default_factory=list)
    deps: list[list[tuple[int, str]]] = field(default_factory=list)
    frames: list[tuple[int, list[tuple[str, int, int]]]] = \
        field(default_factory=list)


class ToolchainUnavailable(RuntimeError):
    """Raised when a requested backend cannot run; carries an install hint."""


# --------------------------------------------------------------------------
# Builtin deterministic pipeline

_DETS = {"the", "a", "an", "this", "that", "these", "those"}
_AUXES = {"is", "are", "was", "were", "be", "been", "being", "am", "has",
          "have", "had", "do", "does", "did", "will", "would", "can",
          "could", "may", "might", "shall", "should", "must"}
_PREPS = {"of", "in", "on", "at", "from", "to", "with", "by", "for", "as",
          "into", "onto", "over", "under", "about", "through", "during",
          "against", "since", "until", "before", "after"}
_PRONOUNS = {"he", "she", "it", "they", "we", "i", "you", "who", "whom",
             "which", "what", "them", "him", "her", "us", "me", "its",
             "his", "their", "our", "my", "your"}
_CONJS = {"and", "or", "but", "nor"}
_VERB_STEMS = {
    "live", "employ", "seize", "raid", "descend", "emerge", "evolve",
    "open", "close", "begin", "stop", "continue", "give", "adopt", "found",
    "settle", "rule", "sign", "name", "work", "move", "lead", "win",
    "lose", "hold", "carry", "consider", "predict", "answer", "train",
    "retrieve", "expand", "point", "say", "show", "make", "come", "go",
    "take", "remain", "become", "form",
}
_IRREGULAR_VERBS = {
    "said", "went", "came", "took", "gave", "made", "held", "won", "lost",
    "led", "became", "formed", "left", "got", "ran", "wrote", "spoke",
    "began", "saw", "knew", "grew", "met",
}
_PASSIVE_PARTICIPLES = {"descended", "founded", "born", "named", "formed",
                        "built", "signed", "known", "written", "settled"}

_MONTHS = {m.lower() for m in (
    "January", "February", "March", "April", "May", "June", "July",
    "August", "September", "October", "November", "December",
)}
_PERIOD_WORDS = {"century", "centuries", "decade", "decades", "year",
                 "years", "millennium"}

_PERSON_GAZETTEER = {
    "Rollo", "Herleva", "William", "Richard", "John", "Mary", "Marie",
    "Boris", "Clara", "Kim", "Ana", "Omar", "Lena", "Igor", "Nadia",
    "Pablo", "Greta", "Hugo", "Iris", "Jonas", "Karim", "Laila", "Mikel",
    "Nora", "Oscar", "Petra", "Ravi", "Sofia", "Tariq", "Ulla", "Viktor",
    "Wanda", "Yusuf", "Zara", "Emil", "Dana", "Felix", "Anton", "Bruno",
    "Celia", "Dmitri", "Elena", "Farid", "Gina", "Henrik", "Charles",
    "Henry", "Edward", "Tutu", "Biden",
}
_GPE_GAZETTEER = {
    "Denmark", "France", "Norway", "Iceland", "England", "Normandy",
    "Scotland", "Wales", "Ireland", "Italy", "Spain", "Germany", "Sicily",
    "Europe", "America", "China", "Russia", "Canada", "Lyon", "Oslo",
    "Porto", "Turin", "Gdansk", "Malmo", "Bergen", "Nantes", "Leeds",
    "Bristol", "Ghent", "Basel", "Graz", "Split", "Varna", "Tartu",
    "Kiel", "Arles", "Dover", "Rouen", "Paris", "London", "Rome",
    "Cadiz", "Brno", "Pisa", "Linz", "Metz", "Bonn", "Riga", "Vaasa",
    "Washington", "Darfur",
}
_CAP_FUNCTION_WORDS = {
    "A", "An", "The", "This", "That", "These", "Those", "It", "Its", "He",
    "His", "She", "Her", "They", "Their", "We", "Our", "I", "My", "You",
    "Your", "Who", "What", "Where", "When", "Why", "How", "Which", "In",
    "On", "At", "By", "For", "To", "From", "Of", "With", "But", "And",
    "Or", "If", "As", "So", "Not", "There", "Here", "All", "Some",
    "During", "Since", "Until", "Before", "After", "Today", "However",
}


def _pos_tags(tokens: list[RawToken]) -> list[str]:
    tags = []
    for tok in tokens:
        text = tok.text
        lower = text.lower()
        if not text[0].isalnum():
            tags.append("PUNCT")
        elif text.isdigit():
            tags.append("NUM")
        elif lower in _DETS:
            tags.append("DET")
        elif lower in _AUXES:
            tags.append("AUX")
        elif lower in _PREPS:
            tags.append("ADP")
        elif lower in _PRONOUNS:
            tags.append("PRON")
        elif lower in _CONJS:
            tags.append("CC")
        elif lower.endswith("ly") and len(lower) > 3:
            tags.append("ADV")
        elif (lower in _IRREGULAR_VERBS
              or lower in _VERB_STEMS
              or (lower.endswith("ed") and len(lower) > 3)
              or (lower.endswith("ing") and len(lower) > 5)
              or (lower.endswith("s") and lower[:-1] in _VERB_STEMS)):
            tags.append("VERB")
        elif text[0].isupper() and text.isalpha():
            tags.append("PROPN")
        else:
            tags.append("NOUN")
    return tags


def _sentence_ranges(tokens: list[RawToken]) -> list[tuple[int, int]]:
    out = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok.text in _SENT_TERMINALS:
            out.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        out.append((start, len(tokens)))
    return out


def _noun_runs(tags, lo, hi):
    """Maximal runs of DET/NOUN/PROPN/NUM/PRON; the run head is its last
    non-DET token."""
    runs = []
    i = lo
    while i < hi:
        if tags[i] in ("NOUN", "PROPN", "NUM", "PRON", "DET"):
            j = i
            while j + 1 < hi and tags[j + 1] in ("NOUN", "PROPN", "NUM",
                                                 "DET"):
                j += 1
            if any(tags[k] != "DET" for k in range(i, j + 1)):
                runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return runs


def _run_head(tags, run):
    lo, hi = run
    for k in range(hi - 1, lo - 1, -1):
        if tags[k] != "DET":
            return k
    return hi - 1


class BuiltinBackend:
    """Deterministic rule-based annotator; no external dependencies."""

    name = "builtin"

    def annotate(self, text: str) -> RawAnnotation:
        tokens = [RawToken(m.group(), m.start(), m.end())
                  for m in _TOKEN_RE.finditer(text)]
        sentences = _sentence_ranges(tokens)
        tags = _pos_tags(tokens)
        ann = RawAnnotation(tokens=tokens, sentences=sentences)
        for lo, hi in sentences:
            ann.entities.extend(self._entities(tokens, tags, lo, hi))
            ann.deps.append(self._parse(tokens, tags, lo, hi))
        for s, (lo, hi) in enumerate(sentences):
            ann.frames.extend(self._frames(tokens, tags, lo, hi))
        return ann

    # ---- NER

    def _entities(self, tokens, tags, lo, hi):
        out = []
        i = lo
        while i < hi:
            text = tokens[i].text
            lower = text.lower()
            if lower in _MONTHS and text[0].isupper():
                out.append((i, i + 1, "DATE"))
                i += 1
                continue
            if text.isdigit():
                is_year = len(text) == 4 or (
                    i > lo and tokens[i - 1].text.lower() in
                    {"in", "since", "until", "by", "before", "after",
                     "during"}
                )
                out.append((i, i + 1, "DATE" if is_year else "CARDINAL"))
                i += 1
                continue
            if (re.fullmatch(r"\d+(st|nd|rd|th)", lower)
                    and i + 1 < hi
                    and tokens[i + 1].text.lower() in _PERIOD_WORDS):
                out.append((i, i + 2, "DATE"))
                i += 2
                continue
            if (text[0].isupper() and text.isalpha()
                    and not (i == lo and text in _CAP_FUNCTION_WORDS)):
                j = i + 1
                while (j < hi and tokens[j].text[0].isupper()
                       and tokens[j].text.isalpha()):
                    j += 1
                words = [tokens[k].text for k in range(i, j)]
                if any(w in _PERSON_GAZETTEER for w in words):
                    tag = "PERSON"
                elif any(w in _GPE_GAZETTEER for w in words):
                    tag = "GPE"
                elif words[-1].lower().endswith(("ans", "ish", "ese",
                                                 "ians")):
                    tag = "NORP"
                else:
                    tag = "ORG"
                out.append((i, j, tag))
                i = j
                continue
            i += 1
        return out

    # ---- dependency parse

    def _parse(self, tokens, tags, lo, hi):
        n = hi - lo
        heads = [None] * n
        rels = ["dep"] * n

        root = next((k for k in range(n) if tags[lo + k] == "VERB"), None)
        if root is None:
            root = next((k for k in range(n) if tags[lo + k] == "AUX"),
                        None)
        if root is None:
            root = next((k for k in range(n)
                         if tags[lo + k] != "PUNCT"), 0)
        heads[root] = -1
        rels[root] = "root"

        runs = _noun_runs(tags, lo, hi)
        run_heads = {}
        for run in runs:
            head = _run_head(tags, run) - lo
            run_heads[run] = head
            for k in range(run[0] - lo, run[1] - lo):
                if k == head or heads[k] is not None:
                    continue
                heads[k] = head
                rels[k] = "det" if tags[lo + k] == "DET" else "compound"

        for run in runs:
            head = run_heads[run]
            if heads[head] is not None:
                continue
            before = run[0] - 1
            if before >= lo and tags[before] == "ADP":
                heads[head] = before - lo
                rels[head] = "pobj"
            elif run[1] - lo <= root:
                heads[head] = root
                rels[head] = "nsubj"
            else:
                heads[head] = root
                rels[head] = "obj"

        for k in range(n):
            if heads[k] is not None:
                continue
            tag = tags[lo + k]
            if tag == "PUNCT":
                heads[k], rels[k] = root, "punct"
            elif tag == "ADP":
                prev = next(
                    (m for m in range(k - 1, -1, -1)
                     if tags[lo + m] in ("VERB", "NOUN", "PROPN", "NUM",
                                         "PRON")),
                    None,
                )
                heads[k] = prev if prev is not None else root
                rels[k] = "prep"
            elif tag == "AUX":
                nxt = next((m for m in range(k + 1, n)
                            if tags[lo + m] == "VERB"), None)
                heads[k] = nxt if nxt is not None else root
                rels[k] = "aux"
            elif tag == "CC":
                heads[k], rels[k] = root, "cc"
            elif tag == "ADV":
                heads[k], rels[k] = root, "advmod"
            else:
                heads[k], rels[k] = root, "dep"
        heads[root] = -1

        self._repair(heads, rels, root)
        return list(zip(heads, rels))

    @staticmethod
    def _repair(heads, rels, root) -> None:
        """Reattach any token on a cycle or self-loop directly to the root."""
        n = len(heads)
        for i in range(n):
            if heads[i] == i:
                heads[i] = root
        for i in range(n):
            seen = set()
            cur = i
            while heads[cur] != -1:
                if cur in seen:
                    heads[cur] = root
                    rels[cur] = "dep"
                    break
                seen.add(cur)
                cur = heads[cur]

    # ---- role frames

    def _frames(self, tokens, tags, lo, hi):
        frames = []
        runs = _noun_runs(tags, lo, hi)
        for v in range(lo, hi):
            if tags[v] != "VERB":
                continue
            lower = tokens[v].text.lower()
            passive = (
                (lower.endswith("ed") or lower in _PASSIVE_PARTICIPLES)
                and any(tags[a] == "AUX"
                        and tokens[a].text.lower() in
                        {"is", "are", "was", "were", "be", "been", "being",
                         "am"}
                        for a in range(max(lo, v - 3), v))
            )
            args = []
            taken = []

            def claim(role, start, end):
                if any(s < end and start < e for s, e in taken):
                    return
                taken.append((start, end))
                args.append((role, start, end))

            subject = None
            for run in runs:
                if run[1] <= v:
                    subject = run
            if subject:
                claim("ARG1" if passive else "ARG0", *subject)

            after = [run for run in runs if run[0] > v]
            if after and not passive:
                first = after[0]
                # direct object: nothing but determiners between verb and run
                if all(tags[m] == "DET" for m in range(v + 1, first[0])):
                    claim("ARG1", *first)

            for run in after:
                p = run[0] - 1
                if p <= v or tags[p] != "ADP":
                    continue
                prep = tokens[p].text.lower()
                span = (p, run[1])     # include the preposition
                if prep == "by" and passive:
                    claim("ARG0", run[0], run[1])
                elif prep in {"from", "to", "with", "of", "as"}:
                    claim("ARG2", run[0], run[1])
                elif prep in {"during", "since", "until"}:
                    claim("ARGM-TMP", span[0], span[1])
                elif prep in {"in", "at", "on"}:
                    datish = any(
                        tokens[m].text.isdigit()
                        or tokens[m].text.lower() in _MONTHS
                        or tokens[m].text.lower() in _PERIOD_WORDS
                        or re.fullmatch(r"\d+(st|nd|rd|th)",
                                        tokens[m].text.lower())
                        for m in range(run[0], run[1])
                    )
                    claim("ARGM-TMP" if datish else "ARGM-LOC",
                          span[0], span[1])
            if args:
                frames.append((v, args))
        return frames


# --------------------------------------------------------------------------
# spaCy pipeline

SPACY_HINT = ("spaCy backend requested but unavailable; install it with "
              "'pip install spacy' and "
              "'python -m spacy download en_core_web_sm'")


class SpacyBackend:
    name = "spacy"

    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise ToolchainUnavailable(SPACY_HINT) from exc
        try:
            self._nlp = spacy.load(model)
        except OSError as exc:
            raise ToolchainUnavailable(SPACY_HINT) from exc
        self._rules = BuiltinBackend()

    def annotate(self, text: str) -> RawAnnotation:
        doc = self._nlp(text)
        tokens = [RawToken(t.text, t.idx, t.idx + len(t.text))
                  for t in doc if not t.is_space]
        index_of = {t.i: k for k, t in
                    enumerate(t for t in doc if not t.is_space)}
        sentences = []
        deps = []
        for sent in doc.sents:
            members = [t for t in sent if not t.is_space]
            if not members:
                continue
            lo = index_of[members[0].i]
            hi = index_of[members[-1].i] + 1
            sentences.append((lo, hi))
            local = {t.i: j for j, t in enumerate(members)}
            arcs = []
            for t in members:
                if t.head.i == t.i or t.head.i not in local:
                    arcs.append((-1, "root"))
                else:
                    arcs.append((local[t.head.i], t.dep_))
            deps.append(arcs)
        entities = []
        for ent in doc.ents:
            span_tokens = [t for t in ent if not t.is_space]
            if not span_tokens:
                continue
            entities.append((index_of[span_tokens[0].i],
                             index_of[span_tokens[-1].i] + 1, ent.label_))
        ann = RawAnnotation(tokens=tokens, sentences=sentences,
                            entities=entities, deps=deps)
        # spaCy ships no SRL; derive frames with the rule patterns.
        tags = _pos_tags(tokens)
        for lo, hi in sentences:
            ann.frames.extend(self._rules._frames(tokens, tags, lo, hi))
        return ann


def get_backend(name: str = "auto"):
    if name == "builtin":
        return BuiltinBackend()
    if name == "spacy":
        return SpacyBackend()
    if name == "auto":
        try:
            return SpacyBackend()
        except ToolchainUnavailable:
            logger.info("spaCy unavailable, using the builtin backend")
            return BuiltinBackend()
    raise ValueError(f"unknown backend {name!r}")
