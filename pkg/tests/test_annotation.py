"""Annotation layer: loaders, validator, heuristic annotator, round-trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttlqa.annotation import (
    AnnotatedContext,
    DepTree,
    EntitySpan,
    SrlArg,
    SrlFrame,
    context_from_dict,
    context_to_dict,
    heuristic_annotate,
    load_annotations,
    load_squad_dataset,
    save_annotations,
    split_sentences,
    tokenize,
    validate,
)
from ttlqa.errors import DataError, ParseError, ValidationError


class TestHeuristicAnnotate:
    def test_entity_rules_on_mixed_sentence(self):
        ctx = heuristic_annotate("t", "Normans raided France in 911.")
        got = [(ctx.span_text(e.start_tok, e.end_tok), e.label)
               for e in ctx.entities]
        assert got == [("Normans", "THING"), ("France", "LOCATION"),
                       ("911", "TEMPORAL")]

    def test_no_capitals_or_digits_no_entities(self):
        ctx = heuristic_annotate("t", "the cat sat.")
        assert ctx.entities == ()

    def test_empty_text_raises(self):
        with pytest.raises(DataError):
            heuristic_annotate("t", "")

    def test_four_digit_number_is_temporal(self):
        ctx = heuristic_annotate("t", "Production started by 1921 exactly.")
        labels = {ctx.span_text(e.start_tok, e.end_tok): e.label
                  for e in ctx.entities}
        assert labels["1921"] == "TEMPORAL"

    def test_month_word_is_temporal(self):
        ctx = heuristic_annotate("t", "It opened during March that year.")
        labels = {ctx.span_text(e.start_tok, e.end_tok): e.label
                  for e in ctx.entities}
        assert labels["March"] == "TEMPORAL"

    def test_plain_count_is_numeric(self):
        ctx = heuristic_annotate("t", "The plant employs 294 people.")
        labels = {ctx.span_text(e.start_tok, e.end_tok): e.label
                  for e in ctx.entities}
        assert labels["294"] == "NUMERIC"

    def test_sentence_initial_pronoun_not_entity(self):
        ctx = heuristic_annotate("t", "They were pirates from Denmark.")
        texts = [ctx.span_text(e.start_tok, e.end_tok) for e in ctx.entities]
        assert "They" not in texts
        assert "Denmark" in texts

    def test_person_lexicon_label(self):
        ctx = heuristic_annotate("t", "Rollo seized Normandy.")
        labels = {ctx.span_text(e.start_tok, e.end_tok): e.label
                  for e in ctx.entities}
        assert labels["Rollo"] == "PERSON"
        assert labels["Normandy"] == "LOCATION"

    def test_deterministic(self):
        text = "Marie founded Acme in 1921. Boris lives in Lyon."
        assert heuristic_annotate("x", text) == heuristic_annotate("x", text)

    def test_sentence_split_covers_all_tokens(self):
        ctx = heuristic_annotate("t", "One! Two? Three. Four")
        assert ctx.sentences[0][0] == 0
        assert ctx.sentences[-1][1] == len(ctx.tokens)
        assert len(ctx.sentences) == 4

    @given(st.text(min_size=1, max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_tokens_reconstruct_text(self, text):
        tokens = tokenize(text)
        rebuilt = []
        prev = 0
        for tok in tokens:
            rebuilt.append(text[prev:tok.start_char])
            rebuilt.append(tok.text)
            assert text[tok.start_char:tok.end_char] == tok.text
            prev = tok.end_char
        rebuilt.append(text[prev:])
        assert "".join(rebuilt) == text

    @given(st.text(min_size=1, max_size=200))
    @settings(max_examples=100, deadline=None)
    def test_annotate_random_text_validates(self, text):
        try:
            ctx = heuristic_annotate("r", text)
        except DataError:
            assert not tokenize(text)
            return
        assert validate(ctx) == []


class TestValidate:
    def test_well_formed_fixture_is_clean(self, small_contexts):
        for ctx in small_contexts:
            assert validate(ctx) == []

    def test_empty_entity_span_flagged(self):
        ctx = heuristic_annotate("t", "Rollo seized Normandy.")
        bad = AnnotatedContext(
            id=ctx.id, text=ctx.text, tokens=ctx.tokens,
            sentences=ctx.sentences,
            entities=(EntitySpan(1, 1, "PERSON"),),
        )
        assert any("entity 0" in v for v in validate(bad))

    def test_two_roots_flagged(self):
        ctx = heuristic_annotate("t", "Rollo seized Normandy")
        bad = AnnotatedContext(
            id=ctx.id, text=ctx.text, tokens=ctx.tokens,
            sentences=ctx.sentences,
            dep=(DepTree(0, heads=(-1, -1, 1), rels=("root", "root", "obj")),),
        )
        assert any("root" in v for v in validate(bad))

    def test_entity_crossing_sentences_flagged(self):
        ctx = heuristic_annotate("t", "Rollo left. France stayed.")
        bad = AnnotatedContext(
            id=ctx.id, text=ctx.text, tokens=ctx.tokens,
            sentences=ctx.sentences,
            entities=(EntitySpan(1, 4, "THING"),),
        )
        assert any("sentence boundary" in v for v in validate(bad))

    def test_overlapping_srl_args_flagged(self):
        ctx = heuristic_annotate("t", "Rollo seized Normandy quickly")
        bad = AnnotatedContext(
            id=ctx.id, text=ctx.text, tokens=ctx.tokens,
            sentences=ctx.sentences,
            srl=(SrlFrame(pred=1, args=(SrlArg("ARG0", 0, 2),
                                        SrlArg("ARG1", 1, 3))),),
        )
        assert any("overlapping" in v for v in validate(bad))


class TestInterchange:
    def test_roundtrip_field_by_field(self, small_contexts, tmp_path):
        path = tmp_path / "roundtrip.json"
        save_annotations(small_contexts, path)
        again = load_annotations(path)
        assert again == small_contexts

    def test_three_contexts_in_file_order(self, small_contexts):
        assert [c.id for c in small_contexts] == [
            "normans-1", "rollo-1", "plain-1"
        ]

    def test_valid_tree_rooted_mid_sentence(self):
        # head array [1, ROOT, 1] over three tokens is a tree rooted at 1
        obj = context_to_dict(heuristic_annotate("t", "Rollo seized Normandy"))
        obj["dep"] = [[{"head": 1, "rel": "nsubj"},
                       {"head": -1, "rel": "root"},
                       {"head": 1, "rel": "obj"}]]
        ctx = context_from_dict(obj)
        assert validate(ctx) == []

    def test_two_cycle_rejected(self, tmp_path):
        obj = context_to_dict(heuristic_annotate("t", "Rollo left"))
        obj["dep"] = [[{"head": 1, "rel": "a"}, {"head": 0, "rel": "b"}]]
        path = tmp_path / "cycle.json"
        path.write_text(json.dumps([obj]))
        with pytest.raises(ValidationError) as exc:
            load_annotations(path)
        assert "sentence 0" in str(exc.value)

    def test_entity_crossing_sentence_rejected_on_load(self, tmp_path):
        obj = context_to_dict(heuristic_annotate("t", "Rollo left. Go now."))
        obj["entities"] = [{"start_tok": 1, "end_tok": 5, "label": "THING"}]
        path = tmp_path / "cross.json"
        path.write_text(json.dumps([obj]))
        with pytest.raises(ValidationError):
            load_annotations(path)

    def test_unknown_srl_role_dropped_with_warning(self, caplog):
        obj = context_to_dict(heuristic_annotate("t", "Rollo seized Normandy"))
        obj["srl"] = [{"pred": 1, "args": [
            {"role": "ARGM-MNR", "start_tok": 0, "end_tok": 1},
            {"role": "ARG0", "start_tok": 0, "end_tok": 1},
        ]}]
        with caplog.at_level("WARNING"):
            ctx = context_from_dict(obj)
        assert len(ctx.srl[0].args) == 1
        assert ctx.srl[0].args[0].role == "ARG0"
        assert "ARGM-MNR" in caplog.text

    def test_missing_field_names_path(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps([{"id": "x", "text": "y"}]))
        with pytest.raises(ParseError) as exc:
            load_annotations(path)
        assert "tokens" in str(exc.value)


class TestLoadSquad:
    def test_structural_counts(self, fixtures_dir):
        corpus = load_squad_dataset(fixtures_dir / "squad_tiny.json")
        assert len(corpus.contexts) == 2
        assert sum(len(qs) for qs in corpus.questions.values()) == 3

    def test_context_retrievable_with_intact_offsets(self, fixtures_dir):
        corpus = load_squad_dataset(fixtures_dir / "squad_tiny.json")
        ctx = corpus.context_by_id("Normans_p0")
        assert ctx.text.startswith("They were descended from Norse raiders")
        q = corpus.questions["Normans_p0"][0]
        gold = q.answers[0]
        assert ctx.text[gold.answer_start:
                        gold.answer_start + len(gold.text)] == gold.text

    def test_duplicate_answers_preserved(self, tmp_path):
        text = "Rollo seized Normandy."
        payload = {"data": [{"title": "t", "paragraphs": [{
            "context": text,
            "qas": [{"id": "q1", "question": "Who?", "answers": [
                {"text": "Rollo", "answer_start": 0},
                {"text": "Rollo", "answer_start": 0},
            ]}],
        }]}]}
        path = tmp_path / "dup.json"
        path.write_text(json.dumps(payload))
        corpus = load_squad_dataset(path)
        assert len(corpus.questions["t_p0"][0].answers) == 2

    def test_negative_answer_start_rejected(self, tmp_path):
        payload = {"data": [{"title": "t", "paragraphs": [{
            "context": "Rollo seized Normandy.",
            "qas": [{"id": "bad-q", "question": "Who?", "answers": [
                {"text": "Rollo", "answer_start": -1},
            ]}],
        }]}]}
        path = tmp_path / "neg.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ValidationError) as exc:
            load_squad_dataset(path)
        assert "bad-q" in str(exc.value)

    def test_mismatched_offset_rejected(self, tmp_path):
        payload = {"data": [{"title": "t", "paragraphs": [{
            "context": "Rollo seized Normandy.",
            "qas": [{"id": "off-q", "question": "Who?", "answers": [
                {"text": "Rollo", "answer_start": 3},
            ]}],
        }]}]}
        path = tmp_path / "off.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ValidationError) as exc:
            load_squad_dataset(path)
        assert "off-q" in str(exc.value)

    def test_malformed_structure_names_element(self, tmp_path):
        path = tmp_path / "malformed.json"
        path.write_text(json.dumps({"data": [{"title": "x"}]}))
        with pytest.raises(ParseError) as exc:
            load_squad_dataset(path)
        assert "paragraphs" in str(exc.value)


def test_sentences_partition_tokens():
    tokens = tokenize("A b. C d! E")
    sentences = split_sentences(tokens)
    covered = [i for lo, hi in sentences for i in range(lo, hi)]
    assert covered == list(range(len(tokens)))
