"""Autoregressive docid scorers: the interface and a counting reference model."""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .hashing import seeded_hash

BOS = -1


class ScorerInterface(Protocol):
    """Conditional next-token model over the docid vocabulary.

    next_logprobs must return a finite length-k_vocab vector whose
    exponentials sum to 1, for every (query, prefix).
    """

    k_vocab: int

    def next_logprobs(self, query: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        ...


@dataclass(frozen=True)
class TrainingPair:
    query: tuple[int, ...]
    docid: tuple[int, ...]
    weight: float = 1.0


class UniformScorer:
    """Maximum-entropy scorer; useful as a baseline and in decoding tests."""

    def __init__(self, k_vocab: int) -> None:
        self.k_vocab = k_vocab
        self._logp = np.full(k_vocab, -np.log(k_vocab))

    def next_logprobs(self, query: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        return self._logp


class ReferenceScorer:
    """Add-lambda smoothed counting model conditioned on hashed query tokens.

    For each query token bucket b, docid position t, and previous docid token
    p, the model accumulates weighted next-token counts. Prediction sums the
    count vectors of all query-token buckets and smooths:

        P(z_t = v) = (count(v) + lambda) / (total + lambda * k_vocab)

    which is strictly positive and exactly normalized.
    """

    def __init__(self, k_vocab: int, lam: float = 0.1, buckets: int = 4096,
                 seed: int = 0) -> None:
        if k_vocab < 1:
            raise ValueError(f"k_vocab must be >= 1, got {k_vocab}")
        if lam <= 0:
            raise ValueError(f"lambda must be > 0, got {lam}")
        self.k_vocab = k_vocab
        self.lam = lam
        self.buckets = buckets
        self.seed = seed
        self._counts: dict[tuple[int, int, int], dict[int, float]] = {}
        self._totals: dict[tuple[int, int, int], float] = {}

    def _bucket(self, token: int) -> int:
        return seeded_hash(self.seed, token) % self.buckets

    def observe(self, query: Sequence[int], docid: Sequence[int], weight: float = 1.0) -> None:
        for tok in docid:
            if not 0 <= tok < self.k_vocab:
                raise ValueError(f"docid token {tok} out of range [0,{self.k_vocab})")
        bucketed = [self._bucket(q) for q in query]
        prev = BOS
        for pos, tok in enumerate(docid):
            for b in bucketed:
                ctx = (b, pos, prev)
                slot = self._counts.get(ctx)
                if slot is None:
                    slot = {}
                    self._counts[ctx] = slot
                slot[tok] = slot.get(tok, 0.0) + weight
                self._totals[ctx] = self._totals.get(ctx, 0.0) + weight
            prev = tok

    def next_logprobs(self, query: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        pos = len(prefix)
        prev = prefix[-1] if prefix else BOS
        acc = np.zeros(self.k_vocab, dtype=np.float64)
        total = 0.0
        counts = self._counts
        for q in query:
            ctx = (self._bucket(q), pos, prev)
            slot = counts.get(ctx)
            if slot is None:
                continue
            for tok, c in slot.items():
                acc[tok] += c
            total += self._totals[ctx]
        acc += self.lam
        return np.log(acc) - np.log(total + self.lam * self.k_vocab)

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"{self.k_vocab}|{self.lam}|{self.buckets}|{self.seed}".encode())
        for ctx in sorted(self._counts):
            slot = self._counts[ctx]
            digest.update(repr(ctx).encode())
            digest.update(repr(sorted(slot.items())).encode())
        return digest.hexdigest()

    def state(self) -> dict:
        return {
            "k_vocab": self.k_vocab,
            "lam": self.lam,
            "buckets": self.buckets,
            "seed": self.seed,
            "counts": self._counts,
            "totals": self._totals,
        }

    def save(self, path: str | Path) -> None:
        with Path(path).open("wb") as fh:
            pickle.dump({"version": 1, **self.state()}, fh)

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceScorer":
        with Path(path).open("rb") as fh:
            payload = pickle.load(fh)
        if payload.get("version") != 1:
            raise ValueError(f"{path}: unsupported scorer version")
        scorer = cls(k_vocab=payload["k_vocab"], lam=payload["lam"],
                     buckets=payload["buckets"], seed=payload["seed"])
        scorer._counts = payload["counts"]
        scorer._totals = payload["totals"]
        return scorer


def build_training_pairs(
    chunk_entries: Iterable[tuple[Sequence[int], Sequence[int]]],
    real_queries: Iterable[tuple[Sequence[int], Iterable[Sequence[int]]]] = (),
    pseudo_query_len: int = 8,
    weight: float = 1.0,
) -> list[TrainingPair]:
    """Assemble the three-part training set.

    For every (chunk tokens, docid) entry this yields a pseudo-query pair
    (leading tokens of the chunk) and a document-context pair (all chunk
    tokens). Each (query tokens, docids) entry yields one pair per docid of
    the relevant document.
    """
    pairs: list[TrainingPair] = []
    for tokens, docid in chunk_entries:
        tokens = tuple(tokens)
        docid = tuple(docid)
        pairs.append(TrainingPair(query=tokens[:pseudo_query_len], docid=docid, weight=weight))
        pairs.append(TrainingPair(query=tokens, docid=docid, weight=weight))
    for tokens, docids in real_queries:
        tokens = tuple(tokens)
        for docid in docids:
            pairs.append(TrainingPair(query=tokens, docid=tuple(docid), weight=weight))
    return pairs


def train_reference_scorer(
    pairs: Iterable[TrainingPair],
    k_vocab: int,
    lam: float = 0.1,
    seed: int = 0,
    buckets: int = 4096,
) -> ReferenceScorer:
    """Accumulate counts from training pairs; order-independent."""
    scorer = ReferenceScorer(k_vocab=k_vocab, lam=lam, buckets=buckets, seed=seed)
    for pair in pairs:
        scorer.observe(pair.query, pair.docid, pair.weight)
    return scorer


def sequence_logprob(scorer: ScorerInterface, query: Sequence[int],
                     docid: Sequence[int]) -> float:
    """Sum of stepwise conditional log-probabilities along the docid."""
    if not docid:
        raise ValueError("docid must be non-empty")
    total = 0.0
    for t, tok in enumerate(docid):
        total += float(scorer.next_logprobs(query, docid[:t])[tok])
    return total
