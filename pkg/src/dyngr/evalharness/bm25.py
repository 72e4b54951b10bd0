"""Okapi BM25 over tokenized documents."""

from __future__ import annotations

import math
from collections import Counter
from typing import Mapping, Sequence


class BM25Index:
    """Inverted index scoring with Okapi BM25 and non-negative Robertson idf.

    The index is immutable; rebuild it when the document set changes.
    """

    def __init__(self, docs: Mapping[str, Sequence[int]],
                 k1: float = 0.9, b: float = 0.4) -> None:
        if k1 <= 0:
            raise ValueError(f"k1 must be > 0, got {k1}")
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"b must be in [0,1], got {b}")
        self.k1 = k1
        self.b = b
        self.doc_ids = list(docs)
        self.doc_lens = [len(docs[d]) for d in self.doc_ids]
        n = len(self.doc_ids)
        self.avgdl = (sum(self.doc_lens) / n) if n else 0.0
        self.postings: dict[int, list[tuple[int, int]]] = {}
        for i, doc_id in enumerate(self.doc_ids):
            for term, tf in Counter(docs[doc_id]).items():
                self.postings.setdefault(term, []).append((i, tf))
        self.idf = {
            term: max(math.log((n - len(plist) + 0.5) / (len(plist) + 0.5)), 0.0)
            for term, plist in self.postings.items()
        }

    def retrieve(self, query: Sequence[int], top_k: int = 10) -> list[tuple[str, float]]:
        """Top documents by BM25 score; ties broken by doc id. Each query
        token occurrence contributes one term of the sum."""
        scores: dict[int, float] = {}
        for term in query:
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf[term]
            if idf == 0.0:
                continue
            for i, tf in plist:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_lens[i] / self.avgdl)
                scores[i] = scores.get(i, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        ranked = sorted(((self.doc_ids[i], s) for i, s in scores.items()),
                        key=lambda item: (-item[1], item[0]))
        return ranked[:top_k]


def bm25_retrieve(docs: Mapping[str, Sequence[int]], query: Sequence[int],
                  k1: float = 0.9, b: float = 0.4, top_k: int = 10) -> list[tuple[str, float]]:
    """One-shot BM25 over the given document set (index built fresh)."""
    return BM25Index(docs, k1=k1, b=b).retrieve(query, top_k=top_k)
