"""Bridge acceptance: exported files must satisfy the primary engine's
validator and slice-back checks; the primary package is consumed only
through its public annotation interface."""

import json
from pathlib import Path

import pytest

from ttlqa.annotation import load_annotations, validate

from ttlqa_bridge.backends import (
    BuiltinBackend,
    SpacyBackend,
    ToolchainUnavailable,
    get_backend,
)
from ttlqa_bridge.cli import main
from ttlqa_bridge.export import export_annotations, read_passages
from ttlqa_bridge.labelmap import (
    NER_TAG_MAP,
    map_entity_tag,
    map_srl_role,
)

NORMANS = (
    "They were descended from Norse raiders and pirates from Denmark. "
    "The distinct cultural and ethnic identity of the Normans emerged "
    "initially in the first half of the 10th century and it continued "
    "to evolve."
)

PARAGRAPHS = [
    NORMANS,
    "Rollo seized Normandy in 911. The Normans adopted the customs of "
    "France and settled in the region.",
    "Marie founded Acme in 1921. The company employs 300 people and it "
    "opened offices in Lyon during March.",
    "The emperor signed the treaty in Paris. His army moved to England "
    "before the winter of 1066.",
    "William held a majority in parliament. The law was written by "
    "Richard and it remained in force until 1215.",
]


@pytest.fixture()
def paragraphs_file(tmp_path) -> Path:
    path = tmp_path / "paragraphs.txt"
    path.write_text("\n\n".join(PARAGRAPHS), encoding="utf-8")
    return path


def _spacy_available() -> bool:
    try:
        SpacyBackend()
        return True
    except ToolchainUnavailable:
        return False


class TestLabelMap:
    def test_total_over_inventory(self):
        for tag in NER_TAG_MAP:
            assert map_entity_tag(tag) in (
                "PERSON", "LOCATION", "TEMPORAL", "NUMERIC", "THING"
            )

    def test_unmapped_tag_falls_to_thing(self, caplog):
        with caplog.at_level("WARNING"):
            assert map_entity_tag("XYZZY") == "THING"
        assert "XYZZY" in caplog.text

    def test_role_map_drops_unknown(self, caplog):
        assert map_srl_role("ARG0") == "ARG0"
        assert map_srl_role("AM-TMP") == "ARGM-TMP"
        with caplog.at_level("WARNING"):
            assert map_srl_role("ARGM-MNR") is None


class TestBuiltinBackend:
    def test_trees_are_valid_on_varied_text(self):
        backend = BuiltinBackend()
        for text in PARAGRAPHS:
            ann = backend.annotate(text)
            for arcs in ann.deps:
                heads = [h for h, _ in arcs]
                assert heads.count(-1) == 1
                for i in range(len(heads)):
                    seen = set()
                    cur = i
                    while heads[cur] != -1:
                        assert cur not in seen
                        seen.add(cur)
                        cur = heads[cur]

    def test_normans_entities_and_frame(self):
        ann = BuiltinBackend().annotate(NORMANS)
        surface = {
            " ".join(t.text for t in ann.tokens[s:e]): tag
            for s, e, tag in ann.entities
        }
        assert surface["Denmark"] == "GPE"
        preds = {ann.tokens[p].text for p, _ in ann.frames}
        assert "descended" in preds

    def test_deterministic(self):
        a = BuiltinBackend().annotate(NORMANS)
        b = BuiltinBackend().annotate(NORMANS)
        assert a == b


class TestExport:
    def test_acceptance_five_paragraphs(self, paragraphs_file, tmp_path):
        """Exported annotations pass the primary validator with zero
        violations; every entity and argument slices back exactly."""
        out = tmp_path / "exported.json"
        result = export_annotations(paragraphs_file, out,
                                    backend="builtin")
        assert result.written == 5
        assert result.skipped == 0

        contexts = load_annotations(out)
        assert len(contexts) == 5
        for ctx in contexts:
            assert validate(ctx) == []
            for ent in ctx.entities:
                lo = ctx.tokens[ent.start_tok].start_char
                hi = ctx.tokens[ent.end_tok - 1].end_char
                sliced = ctx.text[lo:hi]
                assert sliced == ctx.span_text(ent.start_tok, ent.end_tok)
                assert sliced.strip() == sliced and sliced
            for frame in ctx.srl:
                for arg in frame.args:
                    lo = ctx.tokens[arg.start_tok].start_char
                    hi = ctx.tokens[arg.end_tok - 1].end_char
                    assert ctx.text[lo:hi]

        normans = contexts[0]
        labels = {normans.span_text(e.start_tok, e.end_tok): e.label
                  for e in normans.entities}
        assert labels["Denmark"] == "LOCATION"
        frame_preds = {normans.tokens[f.pred].text for f in normans.srl}
        assert "descended" in frame_preds

    def test_ner_only_export(self, paragraphs_file, tmp_path):
        out = tmp_path / "ner_only.json"
        export_annotations(paragraphs_file, out, components=("ner",),
                           backend="builtin")
        contexts = load_annotations(out)
        for ctx in contexts:
            assert ctx.entities
            assert ctx.dep == ()
            assert ctx.srl == ()
            assert validate(ctx) == []

    def test_exotic_whitespace_offsets(self, tmp_path):
        src = tmp_path / "spacey.txt"
        src.write_text("Rollo seized   Normandy\tin 911.\n"
                       "  The  duchy grew.", encoding="utf-8")
        out = tmp_path / "spacey.json"
        export_annotations(src, out, backend="builtin")
        contexts = load_annotations(out)
        for ctx in contexts:
            assert validate(ctx) == []
            for ent in ctx.entities:
                lo = ctx.tokens[ent.start_tok].start_char
                hi = ctx.tokens[ent.end_tok - 1].end_char
                assert ctx.text[lo:hi] == ctx.span_text(ent.start_tok,
                                                        ent.end_tok)

    def test_squad_input(self, tmp_path):
        squad = {"data": [{"title": "Normans", "paragraphs": [
            {"context": NORMANS, "qas": []},
            {"context": PARAGRAPHS[1], "qas": []},
        ]}]}
        src = tmp_path / "squad.json"
        src.write_text(json.dumps(squad))
        assert [cid for cid, _ in read_passages(src)] == [
            "Normans_p0", "Normans_p1"
        ]
        out = tmp_path / "from_squad.json"
        result = export_annotations(src, out, backend="builtin")
        assert result.written == 2
        for ctx in load_annotations(out):
            assert validate(ctx) == []


class TestCLI:
    def test_end_to_end(self, paragraphs_file, tmp_path, capsys):
        out = tmp_path / "cli.json"
        rc = main(["--in", str(paragraphs_file), "--out", str(out),
                   "--components", "ner,dep,srl", "--backend", "builtin"])
        assert rc == 0
        assert "exported 5 contexts" in capsys.readouterr().out
        assert len(load_annotations(out)) == 5

    def test_unknown_component(self, paragraphs_file, tmp_path, capsys):
        rc = main(["--in", str(paragraphs_file),
                   "--out", str(tmp_path / "x.json"),
                   "--components", "ner,parse"])
        assert rc == 2
        assert "parse" in capsys.readouterr().err

    @pytest.mark.skipif(_spacy_available(),
                        reason="spaCy installed; hint path not reachable")
    def test_spacy_unavailable_install_hint(self, paragraphs_file,
                                            tmp_path, capsys):
        rc = main(["--in", str(paragraphs_file),
                   "--out", str(tmp_path / "x.json"),
                   "--backend", "spacy"])
        assert rc == 2
        assert "pip install spacy" in capsys.readouterr().err


@pytest.mark.skipif(not _spacy_available(), reason="spaCy not installed")
class TestSpacyBackend:
    def test_export_validates(self, paragraphs_file, tmp_path):
        out = tmp_path / "spacy.json"
        export_annotations(paragraphs_file, out, backend="spacy")
        for ctx in load_annotations(out):
            assert validate(ctx) == []


def test_get_backend_auto_never_fails():
    backend = get_backend("auto")
    assert backend.name in ("spacy", "builtin")
