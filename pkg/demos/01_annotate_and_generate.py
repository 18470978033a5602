"""Walk a raw passage through annotation and all four question generators.

Run:  python demos/01_annotate_and_generate.py
"""

from ttlqa.annotation import (DepTree, SrlArg, SrlFrame, AnnotatedContext,
                              heuristic_annotate, validate)
from ttlqa.qgen import (assemble_training_set, generate_clozes,
                        generate_depparse_questions,
                        generate_qasrl_questions,
                        generate_template_questions, translate_cloze_rule)

text = ("They were descended from Norse raiders and pirates from Denmark. "
        "Rollo seized Normandy in 911.")

ctx = heuristic_annotate("demo", text)
print("passage:", text)
print("\ntokens:", len(ctx.tokens), "sentences:", len(ctx.sentences))
print("entities found by the heuristic annotator:")
for ent in ctx.entities:
    print(f"  {ctx.span_text(ent.start_tok, ent.end_tok):<12} {ent.label}")
assert validate(ctx) == []

print("\ncloze statements and their wh-translations:")
for cloze in generate_clozes(ctx):
    qa = translate_cloze_rule(ctx, cloze)
    print(f"  {' '.join(cloze.tokens)}")
    print(f"    -> {qa.question}  [answer: {qa.answer_text}]")

print("\ntemplate questions (Wh + B + A + ?):")
for qa in generate_template_questions(ctx):
    print(f"  {qa.question}  [answer: {qa.answer_text}]")

# dependency and SRL generators need trees/frames; attach a parse for the
# second sentence and a frame for "seized"
base = ctx
ctx = AnnotatedContext(
    id=base.id, text=base.text, tokens=base.tokens,
    sentences=base.sentences, entities=base.entities,
    dep=(
        DepTree(0, heads=(2, 2, -1, 2, 5, 3, 5, 5, 7, 8, 2),
                rels=("nsubj", "aux", "root", "prep", "amod", "pobj",
                      "cc", "conj", "prep", "pobj", "punct")),
        DepTree(1, heads=(1, -1, 1, 1, 3, 1),
                rels=("nsubj", "root", "obj", "prep", "pobj", "punct")),
    ),
    srl=(SrlFrame(pred=12, args=(SrlArg("ARG0", 11, 12),
                                 SrlArg("ARG1", 13, 14),
                                 SrlArg("ARGM-TMP", 14, 16))),),
)
print("\ndependency-reconstruction questions:")
for qa in generate_depparse_questions(ctx):
    print(f"  {qa.question}  [answer: {qa.answer_text}]")

print("\nQA-SRL questions:")
for qa in generate_qasrl_questions(ctx):
    print(f"  {qa.question}  [answer: {qa.answer_text}]")

pairs = assemble_training_set(ctx, seed=0)
print(f"\nassembled training set: {len(pairs)} deduplicated pairs")
