"""Retrieval metrics for the dynamic-corpus protocol."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

from ..corpus import RelevancePair
from ..docid_index import DocidRegistry


class MetricsError(ValueError):
    pass


def qrels_by_query(pairs: Iterable[RelevancePair]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for pair in pairs:
        if pair.grade > 0:
            out.setdefault(pair.query_id, set()).add(pair.doc_id)
    return out


def hit_at_k(results: Mapping[str, Sequence[tuple[str, float]]],
             qrels: Mapping[str, set[str]], k: int = 10) -> float:
    """Fraction of queries with a relevant document in the top k."""
    if k < 1:
        raise MetricsError(f"k must be >= 1, got {k}")
    if not results:
        return 0.0
    hits = 0
    for qid, ranked in results.items():
        relevant = qrels.get(qid)
        if relevant is None:
            raise MetricsError(f"query {qid!r} has no relevance judgments")
        if any(doc in relevant for doc, _ in ranked[:k]):
            hits += 1
    return hits / len(results)


def forgetting_metric(p_00: float, p_series: Sequence[float]) -> float:
    """Mean clamped drop in initial-query performance across increments."""
    if not p_series:
        raise MetricsError("need at least one post-increment value")
    return sum(max(p_00 - p, 0.0) for p in p_series) / len(p_series)


def generalization_metric(p_series: Sequence[float]) -> float:
    """Mean performance on queries targeting each newly indexed increment."""
    if not p_series:
        raise MetricsError("need at least one increment value")
    return sum(p_series) / len(p_series)


def idbi(results: Mapping[str, Sequence[tuple[str, float]]],
         initial_ids: set[str], new_ids: set[str], k: int = 10) -> float:
    """Initial-document bias: (R_init - E_init) / (k - E_init).

    R_init is the per-query mean count of initial documents in the top k;
    E_init is the count expected under the corpus proportion. Reported raw:
    over-retrieving new documents yields a negative value.
    """
    if not new_ids:
        raise MetricsError("new document set is empty; bias is undefined")
    if not results:
        raise MetricsError("no queries to evaluate")
    expected = k * len(initial_ids) / (len(initial_ids) + len(new_ids))
    mean_init = sum(
        sum(1 for doc, _ in ranked[:k] if doc in initial_ids)
        for ranked in results.values()
    ) / len(results)
    return (mean_init - expected) / (k - expected)


class UnigramLM:
    """Unigram token model with an out-of-vocabulary floor."""

    def __init__(self, logprobs: dict[int, float], floor: float) -> None:
        self._logprobs = logprobs
        self._floor = floor

    def logprob(self, token: int) -> float:
        return self._logprobs.get(token, self._floor)

    @classmethod
    def fit(cls, token_seqs: Iterable[Sequence[int]]) -> "UnigramLM":
        """Add-one smoothed MLE; one unit of mass is reserved for unseen tokens."""
        counts: Counter[int] = Counter()
        for seq in token_seqs:
            counts.update(seq)
        total = sum(counts.values())
        denom = total + len(counts) + 1
        logprobs = {t: math.log((c + 1) / denom) for t, c in counts.items()}
        return cls(logprobs, math.log(1.0 / denom))

    @classmethod
    def uniform(cls, vocab_size: int) -> "UnigramLM":
        logp = -math.log(vocab_size)
        return cls({}, logp)


def semantic_familiarity(lm: UnigramLM, docids: Iterable[Sequence[int]]) -> float:
    """Mean log-probability of docid tokens under the corpus language model."""
    total = 0.0
    n = 0
    for docid in docids:
        for tok in docid:
            total += lm.logprob(tok)
            n += 1
    if n == 0:
        raise MetricsError("docid sample is empty")
    return total / n


def effective_vocab_size(registry: DocidRegistry) -> int:
    """Number of distinct tokens appearing in any registered docid."""
    return len(registry.all_tokens())
