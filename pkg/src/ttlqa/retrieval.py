"""In-process inverted index with BM25 ranking for context expansion.

The index is built once from annotated contexts and is immutable afterwards,
so any number of readers may query it concurrently.  Stopwords are derived
from the corpus itself: the S terms with the highest document frequency are
excluded from postings and contribute nothing to query scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .annotation import AnnotatedContext, context_from_dict, context_to_dict
from .errors import DataError, ParseError

K1 = 1.2
B = 0.75
DEFAULT_STOPWORD_COUNT = 30
DEFAULT_NEIGHBOR_CAP = 500

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RankedHit:
    doc_id: str
    score: float


@dataclass(frozen=True)
class Index:
    postings: dict[str, dict[str, int]]      # term -> doc id -> tf
    doc_lengths: dict[str, int]              # length in terms, stopwords incl.
    doc_count: int
    avg_doc_length: float
    doc_frequencies: dict[str, int]          # over non-stopword terms
    stopwords: tuple[str, ...]
    docs: dict[str, AnnotatedContext] = field(repr=False, default_factory=dict)
    doc_order: tuple[str, ...] = ()


def _doc_terms(ctx: AnnotatedContext) -> list[str]:
    return [t.text.lower() for t in ctx.tokens]


def build_index(contexts, stopword_count: int = DEFAULT_STOPWORD_COUNT) -> Index:
    """Index lowercased tokens; the S most document-frequent terms become
    stopwords and are dropped from postings.  Ties on document frequency are
    broken alphabetically so the stopword list is deterministic."""
    contexts = list(contexts)
    if not contexts:
        raise DataError("cannot build an index over an empty corpus")
    seen = set()
    for ctx in contexts:
        if ctx.id in seen:
            raise DataError(f"duplicate document id {ctx.id!r}")
        seen.add(ctx.id)

    raw_df: dict[str, int] = {}
    term_lists = {}
    for ctx in contexts:
        terms = _doc_terms(ctx)
        term_lists[ctx.id] = terms
        for term in set(terms):
            raw_df[term] = raw_df.get(term, 0) + 1

    by_df = sorted(raw_df.items(), key=lambda kv: (-kv[1], kv[0]))
    stopwords = tuple(term for term, _ in by_df[:stopword_count])
    stopset = set(stopwords)

    postings: dict[str, dict[str, int]] = {}
    doc_lengths = {}
    for ctx in contexts:
        terms = term_lists[ctx.id]
        doc_lengths[ctx.id] = len(terms)
        for term in terms:
            if term in stopset:
                continue
            postings.setdefault(term, {})
            postings[term][ctx.id] = postings[term].get(ctx.id, 0) + 1

    n = len(contexts)
    return Index(
        postings=postings,
        doc_lengths=doc_lengths,
        doc_count=n,
        avg_doc_length=sum(doc_lengths.values()) / n,
        doc_frequencies={t: len(p) for t, p in postings.items()},
        stopwords=stopwords,
        docs={ctx.id: ctx for ctx in contexts},
        doc_order=tuple(ctx.id for ctx in contexts),
    )


def idf(index: Index, term: str) -> float:
    df = index.doc_frequencies.get(term, 0)
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(index: Index, query_terms, doc_id: str) -> float:
    """BM25 with k1=1.2, b=0.75 over the query term sequence (repeats count).

    Stopworded or out-of-vocabulary terms contribute zero.
    """
    if doc_id not in index.doc_lengths:
        raise DataError(f"unknown document id {doc_id!r}")
    length_norm = K1 * (
        1.0 - B + B * index.doc_lengths[doc_id] / index.avg_doc_length
    )
    score = 0.0
    for term in query_terms:
        tf = index.postings.get(term, {}).get(doc_id, 0)
        if tf == 0:
            continue
        score += idf(index, term) * tf * (K1 + 1.0) / (tf + length_norm)
    return score


def rank(index: Index, query_terms, limit: int | None = None) -> list[RankedHit]:
    """All docs with a positive score, best first; ties by ascending doc id."""
    stopset = set(index.stopwords)
    terms = [t for t in query_terms if t not in stopset]
    candidates: set[str] = set()
    for term in set(terms):
        candidates.update(index.postings.get(term, {}))
    hits = [RankedHit(d, bm25_score(index, terms, d)) for d in candidates]
    hits.sort(key=lambda h: (-h.score, h.doc_id))
    return hits[:limit] if limit is not None else hits


def expand_context(
    index: Index, ctx: AnnotatedContext, k: int,
    cap: int = DEFAULT_NEIGHBOR_CAP,
) -> list[AnnotatedContext]:
    """Seed a query with the context's own tokens and return it plus its
    nearest neighbors, ``ctx`` always first, ``min(k, cap)`` contexts total."""
    if k < 1:
        raise DataError("k must be at least 1")
    k = min(k, cap)
    seed = [t for t in _doc_terms(ctx) if t not in set(index.stopwords)]
    scored = [h.doc_id for h in rank(index, seed) if h.doc_id != ctx.id]
    # Zero-score documents still count toward K, in stable id order.
    rest = sorted(d for d in index.doc_lengths
                  if d != ctx.id and d not in set(scored))
    neighbors = scored + rest
    return [ctx] + [index.docs[d] for d in neighbors[:k - 1]]


def save_index(index: Index, path: str | Path) -> None:
    payload = {
        "format_version": INDEX_FORMAT_VERSION,
        "k1": K1,
        "b": B,
        "stopwords": list(index.stopwords),
        "doc_order": list(index.doc_order),
        "docs": [context_to_dict(index.docs[d]) for d in index.doc_order],
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False),
                          encoding="utf-8")


def load_index(path: str | Path) -> Index:
    """Rebuild the index from its persisted documents; round-trip exact
    because postings are a pure function of the documents and stopwords."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    version = payload.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported index format {version!r}")
    contexts = [
        context_from_dict(obj, where=f"docs[{i}]")
        for i, obj in enumerate(payload["docs"])
    ]
    rebuilt = build_index(contexts, stopword_count=len(payload["stopwords"]))
    if list(rebuilt.stopwords) != payload["stopwords"]:
        raise ParseError(f"{path}: stored stopword list does not match "
                         f"rebuilt index")
    return rebuilt
