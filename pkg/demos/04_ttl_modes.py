"""Compare the test-time learning modes on the planted-fact benchmark.

Run:  python demos/04_ttl_modes.py   (about two minutes)
"""

from ttlqa.evaluation import evaluate
from ttlqa.microbench import generate_microbenchmark, generate_pretrain_corpus
from ttlqa.retrieval import build_index
from ttlqa.spanmodel import pretrain, save_checkpoint
from ttlqa.ttl import TTLConfig, predictions_text, run_ttl

corpus = generate_microbenchmark(n_contexts=15, facts_per_context=5, seed=11)
index = build_index(corpus.contexts, stopword_count=30)
base = dict(steps=300, batch_size=32, lr=1e-3, d=64, seed=0)

domain = generate_pretrain_corpus(seed=11, n_contexts=15, facts_per_context=5)
model, optim, stats = pretrain(domain.contexts, steps=600, seed=0, d=64)
save_checkpoint(model, optim, "/tmp/ttlqa-demo.ckpt", seed=0)
print(f"pretrained on {stats['pairs']} domain pairs "
      f"(final loss {stats['final_loss']:.3f})\n")

configs = [
    ("single",             TTLConfig(mode="SINGLE", **base)),
    ("single online",      TTLConfig(mode="SINGLE_ONLINE", **base)),
    ("k-neighbor (K=5)",   TTLConfig(mode="K_NEIGHBOR", k=5, **base)),
    ("k-neighbor online",  TTLConfig(mode="K_NEIGHBOR_ONLINE", k=5, **base)),
    ("all test contexts",  TTLConfig(mode="ALL_CONTEXTS", **base)),
    ("single + pretrained",
     TTLConfig(mode="SINGLE", init="/tmp/ttlqa-demo.ckpt", **base)),
]
print(f"{'mode':<22} {'EM%':>7} {'F1%':>7}")
for name, cfg in configs:
    records = run_ttl(corpus, cfg, index=index)
    report = evaluate(predictions_text(records), corpus)
    print(f"{name:<22} {report.macro_em_pct:>7.2f} "
          f"{report.macro_f1_pct:>7.2f}")
