"""Rendering backend annotations into the interchange file format.

The exporter never rewrites passage text; it only attaches annotations.
Character offsets are Unicode codepoint offsets into the original passage.
A passage whose annotation fails an internal alignment check is skipped
with a warning and counted in the result.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .backends import RawAnnotation, get_backend
from .labelmap import map_entity_tag, map_srl_role

logger = logging.getLogger(__name__)

ALL_COMPONENTS = ("ner", "dep", "srl")


@dataclass(frozen=True)
class ExportResult:
    written: int
    skipped: int
    out_path: str


def _check_alignment(text: str, ann: RawAnnotation) -> None:
    for i, tok in enumerate(ann.tokens):
        if text[tok.start:tok.end] != tok.text:
            raise ValueError(f"token {i} does not slice back to its text")
    pos = 0
    for s, (lo, hi) in enumerate(ann.sentences):
        if lo != pos or hi <= lo:
            raise ValueError(f"sentence {s} does not partition the tokens")
        pos = hi
    if ann.tokens and pos != len(ann.tokens):
        raise ValueError("sentences do not cover all tokens")


def render_context(ctx_id: str, text: str, ann: RawAnnotation,
                   components) -> dict:
    _check_alignment(text, ann)
    entities = []
    if "ner" in components:
        for start, end, tag in ann.entities:
            entities.append({
                "start_tok": start, "end_tok": end,
                "label": map_entity_tag(tag),
            })
    dep = []
    if "dep" in components:
        dep = [
            [{"head": head, "rel": rel} for head, rel in arcs]
            for arcs in ann.deps
        ]
    srl = []
    if "srl" in components:
        for pred, args in ann.frames:
            mapped = []
            for role, start, end in args:
                kept = map_srl_role(role)
                if kept is not None:
                    mapped.append({"role": kept, "start_tok": start,
                                   "end_tok": end})
            if mapped:
                srl.append({"pred": pred, "args": mapped})
    return {
        "id": ctx_id,
        "text": text,
        "tokens": [
            {"text": t.text, "start": t.start, "end": t.end}
            for t in ann.tokens
        ],
        "sentences": [
            {"start_tok": lo, "end_tok": hi} for lo, hi in ann.sentences
        ],
        "entities": entities,
        "dep": dep,
        "srl": srl,
    }


def read_passages(path: Path) -> list[tuple[str, str]]:
    """(id, text) pairs from a SQuAD-format file or blank-line paragraphs."""
    raw = path.read_text(encoding="utf-8")
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError:
        payload = None
    if isinstance(payload, dict) and "data" in payload:
        passages = []
        for i, article in enumerate(payload["data"]):
            title = article.get("title", f"article{i}")
            for j, para in enumerate(article.get("paragraphs", [])):
                passages.append((f"{title}_p{j}", para["context"]))
        return passages
    paragraphs = [p.strip() for p in raw.split("\n\n") if p.strip()]
    return [(f"{path.stem}-{i:04d}", p) for i, p in enumerate(paragraphs)]


def export_annotations(
    dataset_path: str | Path,
    out_path: str | Path,
    components=ALL_COMPONENTS,
    backend="auto",
) -> ExportResult:
    components = tuple(components)
    for c in components:
        if c not in ALL_COMPONENTS:
            raise ValueError(f"unknown component {c!r}")
    annotator = get_backend(backend) if isinstance(backend, str) else backend

    passages = read_passages(Path(dataset_path))
    rendered = []
    skipped = 0
    for ctx_id, text in passages:
        try:
            ann = annotator.annotate(text)
            rendered.append(render_context(ctx_id, text, ann, components))
        except Exception as exc:                 # noqa: BLE001
            logger.warning("skipping passage %s: %s", ctx_id, exc)
            skipped += 1
    Path(out_path).write_text(
        json.dumps(rendered, ensure_ascii=False, indent=1),
        encoding="utf-8",
    )
    if skipped:
        logger.warning("%d passage(s) skipped", skipped)
    return ExportResult(written=len(rendered), skipped=skipped,
                        out_path=str(out_path))
