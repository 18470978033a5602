"""Train the span model on one passage's synthetic pairs and watch the
loss fall; finish with a gradient sanity check.

Run:  python demos/03_span_model_training.py
"""

import numpy as np

from ttlqa.microbench import generate_microbenchmark
from ttlqa.qgen import assemble_training_set
from ttlqa.spanmodel import (OptimState, build_training_examples,
                             build_vocab, compute_loss,
                             compute_loss_and_grads, init_model,
                             predict_span, train_step)

corpus = generate_microbenchmark(n_contexts=1, facts_per_context=10,
                                 cluster_size=1, seed=5)
ctx = corpus.contexts[0]
pairs = assemble_training_set(ctx, seed=0)
vocab = build_vocab([ctx])
model = init_model(vocab, d=96, seed=0)
optim = OptimState.for_model(model, lr=1e-3)
examples = build_training_examples(ctx, pairs, vocab)
print(f"{len(pairs)} pairs -> {len(examples)} training examples, "
      f"vocab {len(vocab)}")

rng = np.random.default_rng(0)
for step in range(1, 501):
    batch = [examples[i] for i in rng.integers(0, len(examples), size=32)]
    loss = train_step(model, optim, batch)
    if step % 100 == 0 or step == 1:
        print(f"  step {step:>4}  loss {loss:.4f}")

print()
for pair in pairs[:4]:
    pred = predict_span(model, ctx, pair.question)
    mark = "ok " if pred.text == pair.answer_text else "?? "
    print(f"{mark}Q: {pair.question}")
    print(f"   A: {pred.text!r} (expected {pair.answer_text!r})")

# finite-difference spot check on a few coordinates
loss, grads = compute_loss_and_grads(model, examples[:4])
h = 1e-5
flat, gflat = model.emb.ravel(), grads[0].ravel()
idx = rng.integers(0, flat.size, size=5)
for k in idx:
    orig = flat[k]
    flat[k] = orig + h
    up = compute_loss(model, examples[:4])
    flat[k] = orig - h
    down = compute_loss(model, examples[:4])
    flat[k] = orig
    print(f"  dE[{k:>5}] analytic {gflat[k]:+.6e} "
          f"finite-diff {(up - down) / (2 * h):+.6e}")
