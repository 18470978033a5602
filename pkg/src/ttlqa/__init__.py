"""Test-time learning engine for extractive reading comprehension.

For each test passage the engine synthesizes question-answer pairs with
rule-based generators, trains a small span-extraction model on them
(optionally over BM25-retrieved neighboring passages, in curriculum order,
or online across a passage stream), and answers unseen questions about the
passage.
"""

__version__ = "0.1.0"

from .annotation import (
    AnnotatedContext,
    Corpus,
    GoldAnswer,
    Question,
    heuristic_annotate,
    load_annotations,
    load_squad_dataset,
    save_annotations,
    validate,
)
from .evaluation import EvalReport, evaluate, exact_match, f1, normalize_answer
from .qgen import (
    SyntheticQA,
    assemble_training_set,
    generate_clozes,
    generate_depparse_questions,
    generate_qasrl_questions,
    generate_template_questions,
    translate_cloze_rule,
)
from .retrieval import Index, bm25_score, build_index, expand_context
from .spanmodel import (
    OptimState,
    SpanModel,
    SpanPrediction,
    forward,
    init_model,
    predict_span,
    pretrain,
    split_windows,
    train_step,
)
from .ttl import (
    TTLConfig,
    RunRecord,
    run_all_contexts_baseline,
    run_curriculum,
    run_k_neighbor,
    run_online,
    run_single_context,
    run_ttl,
)

__all__ = [
    "AnnotatedContext", "Corpus", "GoldAnswer", "Question",
    "heuristic_annotate", "load_annotations", "load_squad_dataset",
    "save_annotations", "validate",
    "EvalReport", "evaluate", "exact_match", "f1", "normalize_answer",
    "SyntheticQA", "assemble_training_set", "generate_clozes",
    "generate_depparse_questions", "generate_qasrl_questions",
    "generate_template_questions", "translate_cloze_rule",
    "Index", "bm25_score", "build_index", "expand_context",
    "OptimState", "SpanModel", "SpanPrediction", "forward", "init_model",
    "predict_span", "pretrain", "split_windows", "train_step",
    "TTLConfig", "RunRecord", "run_all_contexts_baseline", "run_curriculum",
    "run_k_neighbor", "run_online", "run_single_context", "run_ttl",
]
