"""Run the four curriculum orderings and print the comparison table.

Run:  python demos/05_curriculum_orderings.py
"""

from ttlqa.microbench import generate_microbenchmark
from ttlqa.qgen import DEP_PARSE, QA_SRL, RANDOM_SHUFFLED, TEMPLATE
from ttlqa.retrieval import build_index
from ttlqa.ttl import TTLConfig, comparison_table, run_experiments

corpus = generate_microbenchmark(n_contexts=12, facts_per_context=5,
                                 cluster_size=4, seed=19)
index = build_index(corpus.contexts, stopword_count=30)
base = dict(mode="CURRICULUM", k=4, steps=250, batch_size=32, lr=1e-3,
            d=64, seed=0)

experiments = [
    ("random-shuffled", TTLConfig(order=RANDOM_SHUFFLED, **base)),
    ("qasrl>t>dp", TTLConfig(order=(QA_SRL, TEMPLATE, DEP_PARSE), **base)),
    ("t>qasrl>dp", TTLConfig(order=(TEMPLATE, QA_SRL, DEP_PARSE), **base)),
    ("t>dp>qasrl", TTLConfig(order=(TEMPLATE, DEP_PARSE, QA_SRL), **base)),
]
rows = run_experiments(corpus, experiments, index=index)
print(comparison_table(rows))
print("\n(heuristic contexts carry no SRL frames or parses, so the "
      "QA_SRL and DEP_PARSE blocks are empty here; attach bridge "
      "annotations to fill them)")
