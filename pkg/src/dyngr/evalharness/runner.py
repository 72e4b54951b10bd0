"""End-to-end dynamic-corpus experiment runner.

One strategy class per retrieval method. All generative strategies follow the
index-adaptation regime: the scorer is trained once on the initial collection
and never touched again; increments only update indexing structures.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ConfigError, ExperimentConfig
from ..corpus import (DocumentStore, DynamicPlan, QueryStore, RelevancePair,
                      chunk_document, ingest, partition_dynamic)
from ..decode import FMConstraint, FMIndex, TrieConstraint, build_fm_index, constrained_beam_search
from ..docid_index import Docid, DocidRegistry, PrefixTree, register
from ..embed import Embedder
from ..fileio import atomic_write_text
from ..mdgr import (MDGRIndex, coverage_rank_scores, mdgr_build_initial,
                    mdgr_index_new, mdgr_retrieve)
from ..quantize import PQCodebook, load_tree, pq_encode_many, pq_fit, save_tree
from ..scorer import ReferenceScorer, TrainingPair, build_training_pairs, train_reference_scorer
from .bm25 import BM25Index
from .metrics import (UnigramLM, effective_vocab_size, forgetting_metric,
                      generalization_metric, hit_at_k, idbi, qrels_by_query,
                      semantic_familiarity)
from .runfiles import MetricsReport, RetrievalRun, StageMetrics

# Numeric docid tokens are a symbol system of their own; shifting them far
# outside the corpus id space keeps them out-of-vocabulary for the corpus LM.
OOV_BASE = 1 << 40

_FAMILIARITY_SAMPLE_CAP = 2000


def _real_query_entries(plan: DynamicPlan, queries: QueryStore, docids_of):
    by_query: dict[str, list[str]] = {}
    for pair in plan.train_pairs:
        by_query.setdefault(pair.query_id, []).append(pair.doc_id)
    entries = []
    for qid in sorted(by_query):
        docids = []
        for doc_id in by_query[qid]:
            docids.extend(docids_of(doc_id))
        if docids:
            entries.append((queries[qid].tokens, docids))
    return entries


class Strategy:
    """Shared plumbing for the per-method strategies."""

    name: str
    needs_scorer = True

    def __init__(self, config: ExperimentConfig, docs: DocumentStore) -> None:
        self.config = config
        self.docs = docs
        self.indexed: list[str] = []
        self.scorer: ReferenceScorer | None = None

    def build(self, d0_ids: Sequence[str]) -> None:
        raise NotImplementedError

    def index_new(self, doc_ids: Sequence[str]) -> None:
        raise NotImplementedError

    def retrieve(self, query_tokens: Sequence[int], top_k: int) -> list[tuple[str, float]]:
        raise NotImplementedError

    def k_vocab(self) -> int:
        raise NotImplementedError

    def training_data(self, plan: DynamicPlan, queries: QueryStore) -> list[TrainingPair]:
        raise NotImplementedError

    def scorer_hash(self) -> str | None:
        return self.scorer.state_hash() if self.scorer is not None else None

    def familiarity_sample(self, d0_ids: Sequence[str]) -> list[tuple[int, ...]] | None:
        return None

    def effective_vocab(self) -> int | None:
        return None

    def save(self, out_dir: Path) -> None:
        raise NotImplementedError

    def load(self, out_dir: Path, indexed: list[str]) -> None:
        raise NotImplementedError

    def save_scorer(self, out_dir: Path) -> None:
        if self.scorer is not None:
            self.scorer.save(out_dir / "scorer.bin")

    def load_scorer(self, out_dir: Path) -> None:
        path = out_dir / "scorer.bin"
        if self.needs_scorer:
            self.scorer = ReferenceScorer.load(path)

    # docid-bearing strategies share these helpers
    def _chunk_entries_single(self, d0_ids, doc_docid):
        cfg = self.config
        entries = []
        for doc_id in d0_ids:
            tokens = self.docs[doc_id].tokens
            for chunk in chunk_document(doc_id, len(tokens), cfg.window, cfg.stride):
                entries.append((tokens[chunk.start:chunk.end], doc_docid[doc_id]))
        return entries

    def _embed_docs(self, doc_ids: Sequence[str]) -> np.ndarray:
        return self.embedder.embed_many([self.docs[d].tokens for d in doc_ids])


class _TrieRetrievalMixin:
    """Beam search over a prefix tree followed by coverage+rank scoring."""

    registry: DocidRegistry
    tree: PrefixTree

    def _trie_retrieve(self, query_tokens, top_k, max_len):
        cfg = self.config
        hyps = constrained_beam_search(
            self.scorer, TrieConstraint(self.tree), query_tokens,
            beam_width=cfg.beam_width, max_len=max_len)
        ranked = coverage_rank_scores(hyps, lookup=self.registry.lookup, beta=cfg.beta)
        return [(r.doc_id, r.score) for r in ranked[:top_k]]

    def _numeric_familiarity_sample(self):
        docids = sorted(self.registry.docid_to_docs)[:_FAMILIARITY_SAMPLE_CAP]
        return [tuple(OOV_BASE + t for t in docid) for docid in docids]

    def effective_vocab(self) -> int | None:
        return effective_vocab_size(self.registry)


class PQSingleStrategy(_TrieRetrievalMixin, Strategy):
    """One frozen product-quantization code per document."""

    name = "pq"

    def __init__(self, config, docs):
        super().__init__(config, docs)
        self.embedder = Embedder(dim=config.embed_dim, seed=config.seed)
        self.registry = DocidRegistry(kind="numeric", length=config.pq_m)
        self.tree = PrefixTree()
        self.codebook: PQCodebook | None = None
        self.doc_codes: dict[str, Docid] = {}

    def build(self, d0_ids):
        cfg = self.config
        self.embedder.fit_idf([self.docs[d].tokens for d in d0_ids])
        vectors = self._embed_docs(d0_ids)
        self.codebook = pq_fit(vectors, m=cfg.pq_m, k=cfg.pq_k, seed=cfg.seed,
                               max_iters=cfg.kmeans_iters)
        self._register_codes(d0_ids, pq_encode_many(self.codebook, vectors))

    def _register_codes(self, doc_ids, codes):
        for doc_id, row in zip(doc_ids, codes):
            code = tuple(int(t) for t in row)
            register(self.registry, self.tree, code, doc_id)
            self.doc_codes[doc_id] = code
        self.indexed.extend(doc_ids)

    def index_new(self, doc_ids):
        vectors = self._embed_docs(doc_ids)
        self._register_codes(doc_ids, pq_encode_many(self.codebook, vectors))

    def k_vocab(self):
        return self.config.pq_k

    def training_data(self, plan, queries):
        chunk_entries = self._chunk_entries_single(plan.d_sets[0], self.doc_codes)
        real = _real_query_entries(plan, queries, lambda d: [self.doc_codes[d]])
        return build_training_pairs(chunk_entries, real, self.config.pseudo_query_len)

    def retrieve(self, query_tokens, top_k):
        return self._trie_retrieve(query_tokens, top_k, max_len=self.config.pq_m)

    def familiarity_sample(self, d0_ids):
        return self._numeric_familiarity_sample()

    def save(self, out_dir):
        self.codebook.save(out_dir / "codebook.bin")
        self.registry.save(out_dir / "registry.jsonl")
        self.embedder.save_idf(out_dir / "idf.json")
        atomic_write_text(out_dir / "doc_codes.json", json.dumps(
            {d: list(c) for d, c in sorted(self.doc_codes.items())}))

    def load(self, out_dir, indexed):
        self.codebook = PQCodebook.load(out_dir / "codebook.bin")
        self.registry, self.tree = DocidRegistry.load(
            out_dir / "registry.jsonl", kind="numeric", length=self.config.pq_m)
        self.embedder = Embedder.load_idf(out_dir / "idf.json")
        payload = json.loads((out_dir / "doc_codes.json").read_text(encoding="utf-8"))
        self.doc_codes = {d: tuple(c) for d, c in payload.items()}
        self.indexed = list(indexed)


class HierKMeansStrategy(_TrieRetrievalMixin, Strategy):
    """Hierarchical k-means cluster-path docids, one per document."""

    name = "hier-kmeans"

    def __init__(self, config, docs):
        super().__init__(config, docs)
        self.embedder = Embedder(dim=config.embed_dim, seed=config.seed)
        self.registry: DocidRegistry | None = None
        self.tree = PrefixTree()
        self.quantizer = None

    def build(self, d0_ids):
        from ..quantize import hierarchical_docids

        cfg = self.config
        self.embedder.fit_idf([self.docs[d].tokens for d in d0_ids])
        vectors = self._embed_docs(d0_ids)
        embeddings = {d: vectors[i] for i, d in enumerate(d0_ids)}
        self.quantizer, docids = hierarchical_docids(
            embeddings, branching=cfg.branching, leaf_threshold=cfg.leaf_threshold,
            seed=cfg.seed, max_iters=cfg.kmeans_iters)
        self.registry = DocidRegistry(kind="numeric", length=self.quantizer.docid_length)
        for doc_id in d0_ids:
            register(self.registry, self.tree, docids[doc_id], doc_id)
        self.indexed.extend(d0_ids)

    def index_new(self, doc_ids):
        vectors = self._embed_docs(doc_ids)
        for i, doc_id in enumerate(doc_ids):
            docid = self.quantizer.assign_new(doc_id, vectors[i])
            register(self.registry, self.tree, docid, doc_id)
        self.indexed.extend(doc_ids)

    def k_vocab(self):
        # cluster tokens + pad + every ordinal the corpus could ever need
        return self.config.branching + 1 + self.config.leaf_threshold + len(self.docs)

    def training_data(self, plan, queries):
        doc_docid = {d: self.quantizer.doc_paths[d] for d in plan.d_sets[0]}
        chunk_entries = self._chunk_entries_single(plan.d_sets[0], doc_docid)
        real = _real_query_entries(plan, queries, lambda d: [self.quantizer.doc_paths[d]])
        return build_training_pairs(chunk_entries, real, self.config.pseudo_query_len)

    def retrieve(self, query_tokens, top_k):
        return self._trie_retrieve(query_tokens, top_k,
                                   max_len=self.quantizer.docid_length)

    def familiarity_sample(self, d0_ids):
        return self._numeric_familiarity_sample()

    def save(self, out_dir):
        save_tree(self.quantizer, out_dir / "tree.json")
        self.registry.save(out_dir / "registry.jsonl")
        self.embedder.save_idf(out_dir / "idf.json")

    def load(self, out_dir, indexed):
        self.quantizer = load_tree(out_dir / "tree.json")
        self.registry, self.tree = DocidRegistry.load(
            out_dir / "registry.jsonl", kind="numeric",
            length=self.quantizer.docid_length)
        self.embedder = Embedder.load_idf(out_dir / "idf.json")
        self.indexed = list(indexed)


class MDGRStrategy(Strategy):
    """Chunk-level multi-docid retrieval with constrained code expansion."""

    name = "mdgr"

    def __init__(self, config, docs):
        super().__init__(config, docs)
        self.embedder = Embedder(dim=config.embed_dim, seed=config.seed)
        self.index: MDGRIndex | None = None

    def build(self, d0_ids):
        cfg = self.config
        self.embedder.fit_idf([self.docs[d].tokens for d in d0_ids])
        self.index = mdgr_build_initial(
            ((d, self.docs[d].tokens) for d in d0_ids), self.embedder,
            m=cfg.pq_m, k=cfg.pq_k, window=cfg.window, stride=cfg.stride,
            seed=cfg.seed, kmeans_iters=cfg.kmeans_iters, expansion=cfg.expansion)
        self.indexed.extend(d0_ids)

    def index_new(self, doc_ids):
        mdgr_index_new(self.index, ((d, self.docs[d].tokens) for d in doc_ids),
                       self.embedder)
        self.indexed.extend(doc_ids)

    def k_vocab(self):
        return self.config.pq_k

    def training_data(self, plan, queries):
        cfg = self.config
        chunk_entries = []
        for doc_id in plan.d_sets[0]:
            tokens = self.docs[doc_id].tokens
            chunks = chunk_document(doc_id, len(tokens), cfg.window, cfg.stride)
            for chunk, code in zip(chunks, self.index.chunk_codes[doc_id]):
                chunk_entries.append((tokens[chunk.start:chunk.end], code))
        real = _real_query_entries(plan, queries,
                                   lambda d: list(self.index.chunk_codes[d]))
        return build_training_pairs(chunk_entries, real, cfg.pseudo_query_len)

    def retrieve(self, query_tokens, top_k):
        cfg = self.config
        ranked = mdgr_retrieve(self.index, self.scorer, query_tokens,
                               beam_width=cfg.beam_width, beta=cfg.beta, top_k=top_k)
        return [(r.doc_id, r.score) for r in ranked]

    def familiarity_sample(self, d0_ids):
        docids = sorted(self.index.registry.docid_to_docs)[:_FAMILIARITY_SAMPLE_CAP]
        return [tuple(OOV_BASE + t for t in docid) for docid in docids]

    def effective_vocab(self):
        return effective_vocab_size(self.index.registry)

    def save(self, out_dir):
        self.index.codebook.save(out_dir / "codebook.bin")
        self.index.registry.save(out_dir / "registry.jsonl")
        self.embedder.save_idf(out_dir / "idf.json")
        atomic_write_text(out_dir / "existing_codes.json", json.dumps(
            sorted(list(c) for c in self.index.existing_codes)))
        atomic_write_text(out_dir / "chunk_codes.json", json.dumps(
            {d: [list(c) for c in codes]
             for d, codes in sorted(self.index.chunk_codes.items())}))

    def load(self, out_dir, indexed):
        cfg = self.config
        codebook = PQCodebook.load(out_dir / "codebook.bin")
        registry, tree = DocidRegistry.load(
            out_dir / "registry.jsonl", kind="numeric", length=cfg.pq_m)
        existing = frozenset(
            tuple(c) for c in json.loads(
                (out_dir / "existing_codes.json").read_text(encoding="utf-8")))
        chunk_codes = {
            d: [tuple(c) for c in codes]
            for d, codes in json.loads(
                (out_dir / "chunk_codes.json").read_text(encoding="utf-8")).items()}
        self.index = MDGRIndex(
            codebook=codebook, registry=registry, tree=tree,
            existing_codes=existing, window=cfg.window, stride=cfg.stride,
            expansion=cfg.expansion, chunk_codes=chunk_codes)
        self.index._prepare_expansion()
        self.embedder = Embedder.load_idf(out_dir / "idf.json")
        self.indexed = list(indexed)


class NgramFMStrategy(Strategy):
    """Byte n-gram docids decoded under an FM-index over normalized text."""

    name = "ngram-fm"

    def __init__(self, config, docs):
        super().__init__(config, docs)
        self.fm: FMIndex | None = None

    def _normalized(self, doc_id: str) -> str:
        vocab = self.docs.vocab
        return " ".join(vocab.token(t) for t in self.docs[doc_id].tokens)

    def _rebuild(self) -> None:
        self.fm = build_fm_index([(d, self._normalized(d)) for d in self.indexed])

    def build(self, d0_ids):
        self.indexed.extend(d0_ids)
        self._rebuild()

    def index_new(self, doc_ids):
        self.indexed.extend(doc_ids)
        self._rebuild()

    def k_vocab(self):
        return 256

    def _chunk_ngram(self, tokens: Sequence[int]) -> tuple[int, ...]:
        vocab = self.docs.vocab
        text = " ".join(vocab.token(t) for t in tokens)
        return tuple(text.encode("utf-8")[: self.config.ngram_max_len])

    def _doc_ngrams(self, doc_id: str) -> list[tuple[int, ...]]:
        cfg = self.config
        tokens = self.docs[doc_id].tokens
        out = []
        for chunk in chunk_document(doc_id, len(tokens), cfg.window, cfg.stride):
            ngram = self._chunk_ngram(tokens[chunk.start:chunk.end])
            if ngram:
                out.append(ngram)
        return out

    def training_data(self, plan, queries):
        cfg = self.config
        chunk_entries = []
        for doc_id in plan.d_sets[0]:
            tokens = self.docs[doc_id].tokens
            for chunk in chunk_document(doc_id, len(tokens), cfg.window, cfg.stride):
                chunk_toks = tokens[chunk.start:chunk.end]
                ngram = self._chunk_ngram(chunk_toks)
                if ngram:
                    chunk_entries.append((chunk_toks, ngram))
        real = _real_query_entries(plan, queries, self._doc_ngrams)
        return build_training_pairs(chunk_entries, real, cfg.pseudo_query_len)

    def retrieve(self, query_tokens, top_k):
        cfg = self.config
        hyps = constrained_beam_search(
            self.scorer, FMConstraint(self.fm), query_tokens,
            beam_width=cfg.beam_width, max_len=cfg.ngram_max_len)
        if not hyps:
            return []

        def docs_containing(docid):
            hits = self.fm.locate(bytes(docid), limit=cfg.ngram_locate_limit)
            return {doc for doc, _ in hits}

        ranked = coverage_rank_scores(hyps, lookup=docs_containing, beta=cfg.beta)
        return [(r.doc_id, r.score) for r in ranked[:top_k]]

    def familiarity_sample(self, d0_ids):
        cfg = self.config
        sample = []
        for doc_id in d0_ids:
            tokens = self.docs[doc_id].tokens
            for chunk in chunk_document(doc_id, len(tokens), cfg.window, cfg.stride):
                sample.append(tuple(tokens[chunk.start:chunk.start + 3]))
                if len(sample) >= _FAMILIARITY_SAMPLE_CAP:
                    return sample
        return sample or None

    def effective_vocab(self):
        seen: set[int] = set()
        for doc_id in self.indexed:
            seen.update(self.docs[doc_id].tokens)
        return len(seen)

    def save(self, out_dir):
        self.fm.save(out_dir / "fm.npz")

    def load(self, out_dir, indexed):
        self.fm = FMIndex.load(out_dir / "fm.npz")
        self.indexed = list(indexed)


class BM25Strategy(Strategy):
    """Sparse baseline; the whole index is rebuilt at every increment."""

    name = "bm25"
    needs_scorer = False

    def __init__(self, config, docs):
        super().__init__(config, docs)
        self.index: BM25Index | None = None

    def _rebuild(self):
        cfg = self.config
        self.index = BM25Index({d: self.docs[d].tokens for d in self.indexed},
                               k1=cfg.bm25_k1, b=cfg.bm25_b)

    def build(self, d0_ids):
        self.indexed.extend(d0_ids)
        self._rebuild()

    def index_new(self, doc_ids):
        self.indexed.extend(doc_ids)
        self._rebuild()

    def retrieve(self, query_tokens, top_k):
        return self.index.retrieve(query_tokens, top_k=top_k)

    def save(self, out_dir):
        pass

    def load(self, out_dir, indexed):
        self.indexed = list(indexed)
        self._rebuild()


_STRATEGIES = {
    "pq": PQSingleStrategy,
    "hier-kmeans": HierKMeansStrategy,
    "mdgr": MDGRStrategy,
    "ngram-fm": NgramFMStrategy,
    "bm25": BM25Strategy,
}


def make_strategy(config: ExperimentConfig, docs: DocumentStore) -> Strategy:
    try:
        cls = _STRATEGIES[config.method]
    except KeyError:
        raise ConfigError(f"unknown method {config.method!r}") from None
    return cls(config, docs)


def train_strategy_scorer(strategy: Strategy, plan: DynamicPlan,
                          queries: QueryStore) -> None:
    if not strategy.needs_scorer:
        return
    cfg = strategy.config
    pairs = strategy.training_data(plan, queries)
    strategy.scorer = train_reference_scorer(
        pairs, k_vocab=strategy.k_vocab(), lam=cfg.lam, seed=cfg.seed,
        buckets=cfg.buckets)


def evaluate_queries(strategy: Strategy, queries: QueryStore, qids: Sequence[str],
                     stage: int, top_k: int) -> RetrievalRun:
    results = {qid: strategy.retrieve(queries[qid].tokens, top_k) for qid in qids}
    return RetrievalRun(method=strategy.name, stage=stage, results=results)


def summarize_stages(config: ExperimentConfig, stages: list[StageMetrics],
                     familiarity: float | None,
                     effective_vocab: int | None) -> MetricsReport:
    p_00 = stages[0].hit_initial
    return MetricsReport(
        method=config.method,
        seed=config.seed,
        k=config.top_k,
        stages=stages,
        f_n=forgetting_metric(p_00, [s.hit_initial for s in stages[1:]]),
        ga_n=generalization_metric([s.hit_new for s in stages[1:]]),
        semantic_familiarity=familiarity,
        effective_vocab_size=effective_vocab,
    )


def compute_familiarity(strategy: Strategy, d0_ids: Sequence[str]) -> float | None:
    sample = strategy.familiarity_sample(d0_ids)
    if not sample:
        return None
    lm = UnigramLM.fit([strategy.docs[d].tokens for d in d0_ids])
    return semantic_familiarity(lm, sample)


def run_planned_experiment(
    config: ExperimentConfig,
    docs: DocumentStore,
    queries: QueryStore,
    qrels: Sequence[RelevancePair],
    plan: DynamicPlan,
    out_dir: str | Path | None = None,
) -> MetricsReport:
    """Build on the initial set, then index increments and evaluate each stage."""
    strategy = make_strategy(config, docs)
    qrels_map = qrels_by_query(qrels)
    d0_ids = plan.d_sets[0]
    out = Path(out_dir) if out_dir is not None else None

    def emit(run: RetrievalRun, kind: str) -> None:
        if out is not None:
            (out / "runs").mkdir(parents=True, exist_ok=True)
            run.write(out / "runs" / f"stage{run.stage}-{kind}.tsv")

    try:
        strategy.build(d0_ids)
        train_strategy_scorer(strategy, plan, queries)
        run0 = evaluate_queries(strategy, queries, plan.q_sets[0], 0, config.top_k)
    except Exception as exc:
        raise RuntimeError(f"stage 0 failed: {exc}") from exc
    emit(run0, "initial")
    stages = [StageMetrics(stage=0,
                           hit_initial=hit_at_k(run0.results, qrels_map, config.top_k),
                           scorer_hash=strategy.scorer_hash())]

    initial_set = set(d0_ids)
    new_set: set[str] = set()
    for o in range(1, plan.n_increments + 1):
        try:
            strategy.index_new(plan.d_sets[o])
            new_set.update(plan.d_sets[o])
            run_init = evaluate_queries(strategy, queries, plan.q_sets[0], o, config.top_k)
            run_new = evaluate_queries(strategy, queries, plan.q_sets[o], o, config.top_k)
        except Exception as exc:
            raise RuntimeError(f"stage {o} failed: {exc}") from exc
        emit(run_init, "initial")
        emit(run_new, "new")
        combined = {**run_init.results, **run_new.results}
        bias = (idbi(combined, initial_set, new_set, config.top_k)
                if combined and new_set else None)
        stages.append(StageMetrics(
            stage=o,
            hit_initial=hit_at_k(run_init.results, qrels_map, config.top_k),
            hit_new=hit_at_k(run_new.results, qrels_map, config.top_k),
            idbi=bias,
            scorer_hash=strategy.scorer_hash()))

    report = summarize_stages(config, stages,
                              compute_familiarity(strategy, d0_ids),
                              strategy.effective_vocab())
    if out is not None:
        atomic_write_text(out / "report.json", report.to_json() + "\n")
    return report


def run_experiment(
    config: ExperimentConfig,
    stores: tuple[DocumentStore, QueryStore, Sequence[RelevancePair]] | None = None,
) -> MetricsReport:
    """Ingest, partition, and run the full dynamic-corpus protocol."""
    config.validate()
    if stores is None:
        if not (config.docs and config.queries and config.qrels):
            raise ConfigError("config must name docs/queries/qrels paths")
        stores = ingest(config.docs, config.queries, config.qrels)
    docs, queries, qrels = stores
    plan = partition_dynamic(docs, qrels, ratio_initial=config.ratio_initial,
                             n_increments=config.n_increments,
                             train_fraction=config.train_fraction, seed=config.seed)
    return run_planned_experiment(config, docs, queries, qrels, plan,
                                  out_dir=config.out_dir)
