"""Multi-docid retrieval: chunk-level codes, constrained expansion, coverage scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import chunk_document
from .decode import BeamHypothesis, TrieConstraint, constrained_beam_search
from .docid_index import Docid, DocidRegistry, PrefixTree, register
from .embed import Embedder
from .quantize import PQCodebook, pq_encode_many, pq_fit
from .scorer import ScorerInterface


class MDGRError(ValueError):
    pass


@dataclass
class RankedDoc:
    doc_id: str
    score: float
    coverage: int
    matched: list[tuple[Docid, int]]  # (docid, best beam rank)


@dataclass
class MDGRIndex:
    """Chunk-level PQ docid index with a frozen code set.

    After the initial build, new documents may only be assigned codes from
    `existing_codes`, so the prefix tree never grows.
    """

    codebook: PQCodebook
    registry: DocidRegistry
    tree: PrefixTree
    existing_codes: frozenset[Docid]
    window: int
    stride: int
    expansion: str = "code"  # "code" (whole-code nearest) or "token" (per-subspace)
    chunk_codes: dict[str, list[Docid]] = field(default_factory=dict)
    _sorted_codes: list[Docid] = field(default_factory=list, repr=False)
    _recon: np.ndarray | None = field(default=None, repr=False)
    _allowed_tokens: list[np.ndarray] = field(default_factory=list, repr=False)

    def _prepare_expansion(self) -> None:
        from .quantize import pq_reconstruct

        self._sorted_codes = sorted(self.existing_codes)
        self._recon = np.stack([pq_reconstruct(self.codebook, c) for c in self._sorted_codes])
        self._allowed_tokens = [
            np.unique([c[s] for c in self._sorted_codes]) for s in range(self.codebook.m)
        ]

    def encode_constrained(self, vectors: np.ndarray) -> list[Docid]:
        """Assign each vector a code the initial collection already uses.

        Whole-code mode picks the existing code minimizing reconstruction
        distance (lowest lexicographic code on ties); token mode restricts
        each subspace independently to tokens seen at that position.
        """
        if not self.existing_codes:
            raise MDGRError("no existing codes: build the initial index first")
        from .quantize import _pairwise_sq_dists

        x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if self.expansion == "token":
            sub = self.codebook.sub_dim
            picks = np.empty((x.shape[0], self.codebook.m), dtype=np.int64)
            for s in range(self.codebook.m):
                allowed = self._allowed_tokens[s]
                cents = self.codebook.centroids[s][allowed]
                d2 = _pairwise_sq_dists(x[:, s * sub:(s + 1) * sub], cents)
                picks[:, s] = allowed[np.argmin(d2, axis=1)]
            return [tuple(int(t) for t in row) for row in picks]
        d2 = _pairwise_sq_dists(x, self._recon)
        return [self._sorted_codes[int(i)] for i in np.argmin(d2, axis=1)]


def mdgr_build_initial(
    docs: Iterable[tuple[str, Sequence[int]]],
    embedder: Embedder,
    m: int = 4,
    k: int = 1024,
    window: int = 256,
    stride: int = 128,
    seed: int = 0,
    kmeans_iters: int = 25,
    expansion: str = "code",
) -> MDGRIndex:
    """Chunk, embed, and PQ-encode the initial collection."""
    if expansion not in ("code", "token"):
        raise MDGRError(f"unknown expansion mode {expansion!r}")
    doc_ids: list[str] = []
    chunk_owners: list[str] = []
    chunk_vecs: list[np.ndarray] = []
    for doc_id, tokens in docs:
        doc_ids.append(doc_id)
        for chunk in chunk_document(doc_id, len(tokens), window, stride):
            chunk_owners.append(doc_id)
            chunk_vecs.append(embedder.embed(tokens[chunk.start:chunk.end]))
    if not chunk_vecs:
        raise MDGRError("initial collection produced no chunks")
    vectors = np.stack(chunk_vecs)
    codebook = pq_fit(vectors, m=m, k=k, seed=seed, max_iters=kmeans_iters)
    codes = pq_encode_many(codebook, vectors)

    registry = DocidRegistry(kind="numeric", length=m)
    tree = PrefixTree()
    chunk_codes: dict[str, list[Docid]] = {d: [] for d in doc_ids}
    for owner, row in zip(chunk_owners, codes):
        code = tuple(int(t) for t in row)
        register(registry, tree, code, owner)
        chunk_codes[owner].append(code)
    index = MDGRIndex(
        codebook=codebook,
        registry=registry,
        tree=tree,
        existing_codes=frozenset(registry.docid_to_docs),
        window=window,
        stride=stride,
        expansion=expansion,
        chunk_codes=chunk_codes,
    )
    index._prepare_expansion()
    return index


def mdgr_index_new(index: MDGRIndex, docs: Iterable[tuple[str, Sequence[int]]],
                   embedder: Embedder) -> None:
    """Index new documents using only the initial collection's codes."""
    for doc_id, tokens in docs:
        chunks = chunk_document(doc_id, len(tokens), index.window, index.stride)
        if not chunks:
            index.chunk_codes.setdefault(doc_id, [])
            continue
        vecs = np.stack([embedder.embed(tokens[c.start:c.end]) for c in chunks])
        codes = index.encode_constrained(vecs)
        index.chunk_codes[doc_id] = codes
        for code in codes:
            register(index.registry, index.tree, code, doc_id)


def coverage_rank_scores(
    hypotheses: Sequence[BeamHypothesis],
    docs_of: Mapping[Docid, set[str]] | None = None,
    lookup=None,
    beta: float = 1.0,
) -> list[RankedDoc]:
    """Score candidate documents as coverage + beta * sum(1/rank).

    Coverage counts distinct matched docids per document; each distinct docid
    contributes the reciprocal of its best beam rank.
    """
    if beta < 0:
        raise MDGRError(f"beta must be >= 0, got {beta}")
    if lookup is None:
        lookup = lambda docid: docs_of.get(docid, set())  # noqa: E731
    best_rank: dict[Docid, int] = {}
    for hyp in hypotheses:
        if hyp.tokens not in best_rank or hyp.rank < best_rank[hyp.tokens]:
            best_rank[hyp.tokens] = hyp.rank
    matched: dict[str, dict[Docid, int]] = {}
    for docid, rank in best_rank.items():
        for doc in lookup(docid):
            matched.setdefault(doc, {})[docid] = rank
    ranked = []
    for doc, hits in matched.items():
        coverage = len(hits)
        score = coverage + beta * sum(1.0 / r for r in hits.values())
        ranked.append(RankedDoc(doc_id=doc, score=score, coverage=coverage,
                                matched=sorted(hits.items())))
    ranked.sort(key=lambda r: (-r.score, r.doc_id))
    return ranked


def mdgr_retrieve(
    index: MDGRIndex,
    scorer: ScorerInterface,
    query: Sequence[int],
    beam_width: int = 20,
    beta: float = 1.0,
    top_k: int = 10,
) -> list[RankedDoc]:
    """Constrained beam search over chunk codes, then coverage+rank scoring."""
    hyps = constrained_beam_search(
        scorer, TrieConstraint(index.tree), query,
        beam_width=beam_width, max_len=index.codebook.m)
    if not hyps:
        return []
    ranked = coverage_rank_scores(hyps, lookup=index.registry.lookup, beta=beta)
    return ranked[:top_k]
