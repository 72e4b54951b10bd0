"""Metrics, the BM25 baseline, and the dynamic-corpus experiment runner."""

from .bm25 import BM25Index, bm25_retrieve
from .metrics import (MetricsError, UnigramLM, effective_vocab_size,
                      forgetting_metric, generalization_metric, hit_at_k, idbi,
                      qrels_by_query, semantic_familiarity)
from .runfiles import MetricsReport, RetrievalRun, RunFileError, StageMetrics
from .runner import (Strategy, make_strategy, run_experiment,
                     run_planned_experiment)

__all__ = [
    "BM25Index",
    "bm25_retrieve",
    "MetricsError",
    "UnigramLM",
    "effective_vocab_size",
    "forgetting_metric",
    "generalization_metric",
    "hit_at_k",
    "idbi",
    "qrels_by_query",
    "semantic_familiarity",
    "MetricsReport",
    "RetrievalRun",
    "RunFileError",
    "StageMetrics",
    "Strategy",
    "make_strategy",
    "run_experiment",
    "run_planned_experiment",
]
