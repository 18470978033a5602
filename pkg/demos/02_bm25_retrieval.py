"""Build an in-process BM25 index and expand a test context with its
nearest neighbors.

Run:  python demos/02_bm25_retrieval.py
"""

from ttlqa.microbench import generate_microbenchmark
from ttlqa.retrieval import bm25_score, build_index, expand_context, rank

corpus = generate_microbenchmark(n_contexts=20, facts_per_context=5, seed=3)
index = build_index(corpus.contexts, stopword_count=30)
print(f"indexed {index.doc_count} passages, "
      f"avg length {index.avg_doc_length:.1f} terms")
print("corpus-derived stopwords:", ", ".join(index.stopwords[:12]), "...")

query = "who founded something and when did it open"
terms = query.split()
print(f"\nquery: {query!r}")
for hit in rank(index, terms, limit=5):
    print(f"  {hit.doc_id}  score={hit.score:.3f}")

ctx = corpus.contexts[0]
print(f"\nexpanding {ctx.id}: {ctx.text[:70]}...")
for neighbor in expand_context(index, ctx, k=5):
    seed_terms = [t.text.lower() for t in ctx.tokens]
    print(f"  {neighbor.id}  "
          f"bm25={bm25_score(index, seed_terms, neighbor.id):7.2f}  "
          f"{neighbor.text[:60]}...")
