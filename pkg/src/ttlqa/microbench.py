"""Planted-fact micro-benchmark generator.

Builds small synthetic corpora where every context states a handful of
entity facts in fixed sentence frames, and every fact has one held-out
natural question whose answer is the planted entity.

Contexts come in clusters of siblings that share the same facts rendered
through rotating paraphrase frames, the way a real corpus contains several
passages about one topic.  Entity values are unique across clusters, so a
BM25 query retrieves exactly the topical siblings and the pooled neighbor
pairs reinforce, rather than contradict, the single-context signal.  All
values are drawn from closed pools that the heuristic annotator recognizes,
and everything is a pure function of the generator seed.
"""

from __future__ import annotations

import re

import numpy as np

from .annotation import (
    Corpus,
    GoldAnswer,
    LOCATION_LEXICON,
    PERSON_LEXICON,
    Question,
    heuristic_annotate,
)

PERSON_POOL = (
    "Marie", "Boris", "Clara", "Rollo", "Kim", "Ana", "Omar", "Lena",
    "Igor", "Nadia", "Pablo", "Greta", "Hugo", "Iris", "Jonas", "Karim",
    "Laila", "Mikel", "Nora", "Oscar", "Petra", "Ravi", "Sofia", "Tariq",
    "Ulla", "Viktor", "Wanda", "Yusuf", "Zara", "Emil", "Dana", "Felix",
    "Anton", "Bruno", "Celia", "Dmitri", "Elena", "Farid", "Gina", "Henrik",
)
CITY_POOL = (
    "Lyon", "Oslo", "Porto", "Turin", "Gdansk", "Malmo", "Bergen",
    "Nantes", "Leeds", "Bristol", "Ghent", "Basel", "Graz", "Split",
    "Varna", "Tartu", "Kiel", "Arles", "Dover", "Rouen", "Cadiz", "Brno",
    "Pisa", "Linz", "Metz", "Bonn", "Riga", "Vaasa",
)
THING_POOL = (
    "Acme", "Zenith", "Orion", "Vortex", "Quasar", "Nimbus", "Pylon",
    "Krypton", "Meridian", "Cascade", "Bastion", "Citadel", "Foundry",
    "Paragon", "Obsidian", "Quarry", "Redwood", "Sentinel", "Topaz",
    "Umbra", "Vanguard", "Willow", "Xenon", "Harbor", "Lattice", "Prism",
    "Cobalt", "Drift", "Ember", "Fathom", "Gyre", "Helix", "Ingot",
    "Jetty", "Lumen", "Mica", "Nadir", "Onyx", "Pumice", "Keel",
)
YEAR_POOL = tuple(str(y) for y in range(1821, 2016, 5))
NUMBER_POOL = tuple(str(n) for n in range(120, 960, 35))

assert set(PERSON_POOL) <= PERSON_LEXICON
assert set(CITY_POOL) <= LOCATION_LEXICON
assert not set(THING_POOL) & (PERSON_LEXICON | LOCATION_LEXICON)

# One entry per fact type: value slots, three paraphrase frames over the
# slots, and the slot whose value the held-out question asks for.  The
# held-out question is the template question generated from the first
# (canonical) frame.  Types 3 and 4 form a pair sharing one anchor thing,
# and their non-canonical frames replace the canonical verb with synonyms:
# a passage rendered through those frames cannot resolve the canonical
# question by itself, but a sibling passage using the canonical frame can.
_FACT_TYPES = (
    {
        "slots": ("person", "thing", "year"),
        "frames": (
            "{person} founded {thing} in {year}.",
            "{thing} was founded by {person} in {year}.",
            "In {year} {person} founded {thing}.",
        ),
        "answer": "person",
    },
    {
        "slots": ("person", "city"),
        "frames": (
            "{person} lives in {city}.",
            "{person} now lives in {city}.",
            "Today {person} lives in {city}.",
        ),
        "answer": "city",
    },
    {
        "slots": ("thing", "number"),
        "frames": (
            "{thing} employs {number} people.",
            "{thing} employs {number} workers.",
            "{thing} employs about {number} people.",
        ),
        "answer": "number",
    },
    {
        "slots": ("pair_thing", "year"),
        "frames": (
            "{pair_thing} opened in {year}.",
            "{pair_thing} started operations in {year}.",
            "{pair_thing} began trading in {year}.",
        ),
        "answer": "year",
    },
    {
        "slots": ("pair_thing", "year"),
        "frames": (
            "{pair_thing} closed in {year}.",
            "{pair_thing} ended operations in {year}.",
            "{pair_thing} stopped trading in {year}.",
        ),
        "answer": "year",
    },
)


def _held_out_question(spec, values) -> str:
    """The canonical-frame template question asking for the answer slot."""
    from .qgen import generate_template_questions

    answer = values[spec["answer"]]
    sentence = spec["frames"][0].format(**values)
    for qa in generate_template_questions(
        heuristic_annotate("probe", sentence)
    ):
        if qa.answer_text == answer:
            return qa.question
    raise ValueError(f"no template question for answer {answer!r} in "
                     f"{sentence!r}")

_POOLS = {
    "person": PERSON_POOL,
    "city": CITY_POOL,
    "thing": THING_POOL,
    "year": YEAR_POOL,
    "number": NUMBER_POOL,
}


def _draw_world(seed: int, n_clusters: int, facts_per_context: int):
    """The fact world: per-cluster fact values, fixed by the seed alone.

    Values never repeat across clusters, so the world is internally
    consistent and every question about it has a unique answer."""
    rng = np.random.default_rng(seed)
    remaining = {name: list(pool) for name, pool in _POOLS.items()}

    def draw(name: str) -> str:
        pool = remaining[name]
        if not pool:
            raise ValueError(
                f"pool {name!r} exhausted; lower facts_per_context or "
                f"n_contexts"
            )
        return pool.pop(int(rng.integers(len(pool))))

    world = []
    for _ in range(n_clusters):
        facts = []
        pair_thing = None
        for i in range(facts_per_context):
            spec = _FACT_TYPES[i % len(_FACT_TYPES)]
            values = {}
            for slot in spec["slots"]:
                if slot == "pair_thing":
                    if i % len(_FACT_TYPES) == 3 or pair_thing is None:
                        pair_thing = draw("thing")
                    values[slot] = pair_thing
                else:
                    values[slot] = draw(slot)
            facts.append((spec, values))
        world.append(facts)
    return world


def _render(facts, member: int, fact_order) -> str:
    sentences = []
    for pos, i in enumerate(fact_order):
        spec, values = facts[i]
        frame = spec["frames"][(member + pos) % len(spec["frames"])]
        sentences.append(frame.format(**values))
    return " ".join(sentences)


def generate_microbenchmark(
    n_contexts: int = 30,
    facts_per_context: int = 5,
    questions_per_context: int = 5,
    seed: int = 0,
    cluster_size: int = 5,
) -> Corpus:
    """A corpus of planted-fact contexts with held-out questions.

    Contexts form ceil(n_contexts / cluster_size) clusters; siblings within
    a cluster restate the same facts through rotated paraphrase frames, the
    way several passages cover one topic.
    """
    n_clusters = -(-n_contexts // cluster_size)
    world = _draw_world(seed, n_clusters, facts_per_context)

    contexts = []
    questions: dict[str, tuple[Question, ...]] = {}
    for c in range(n_contexts):
        cluster, member = divmod(c, cluster_size)
        facts = world[cluster]
        text = _render(facts, member, range(len(facts)))
        ctx_id = f"planted-{seed}-{c:03d}"
        contexts.append(heuristic_annotate(ctx_id, text))

        qlist = []
        for i, (spec, values) in enumerate(facts[:questions_per_context]):
            answer = values[spec["answer"]]
            match = re.search(rf"\b{re.escape(answer)}\b", text)
            qlist.append(Question(
                id=f"{ctx_id}:{i}",
                text=_held_out_question(spec, values),
                answers=(GoldAnswer(answer, match.start()),),
            ))
        questions[ctx_id] = tuple(qlist)
    return Corpus(contexts=tuple(contexts), questions=questions)


def generate_pretrain_corpus(
    seed: int = 0,
    n_contexts: int = 30,
    facts_per_context: int = 5,
    cluster_size: int = 5,
) -> Corpus:
    """Fresh passages about the same fact world as the benchmark with the
    same seed: facts are re-ordered and re-phrased per passage, never
    contradicted.  This mirrors pretraining on the test corpus's domain,
    where the same facts appear in other documents."""
    n_clusters = -(-n_contexts // cluster_size)
    world = _draw_world(seed, n_clusters, facts_per_context)
    order_rng = np.random.default_rng([seed, 1])

    contexts = []
    for c in range(n_contexts):
        cluster = c % n_clusters
        facts = world[cluster]
        member = cluster_size + c // n_clusters      # offset past benchmark
        fact_order = order_rng.permutation(len(facts))
        text = _render(facts, member, fact_order)
        contexts.append(heuristic_annotate(f"domain-{seed}-{c:03d}", text))
    return Corpus(contexts=tuple(contexts), questions={})
