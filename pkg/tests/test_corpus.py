import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyngr.corpus import (CorpusError, Document, DocumentStore, RelevancePair,
                          chunk_document, ingest, partition_dynamic, tokenize)


def write_corpus(tmp_path, docs, queries, qrels):
    doc_path = tmp_path / "docs.jsonl"
    query_path = tmp_path / "queries.jsonl"
    qrel_path = tmp_path / "qrels.tsv"
    doc_path.write_text("\n".join(json.dumps(d) for d in docs) + "\n")
    query_path.write_text("\n".join(json.dumps(q) for q in queries) + "\n")
    qrel_path.write_text("\n".join("\t".join(map(str, row)) for row in qrels) + "\n")
    return doc_path, query_path, qrel_path


class TestIngest:
    def test_three_docs(self, tmp_path):
        paths = write_corpus(
            tmp_path,
            [{"id": "a", "text": "alpha"}, {"id": "b", "text": "beta"},
             {"id": "c", "text": "gamma"}],
            [{"id": "q1", "text": "alpha"}],
            [("q1", "a", 1)],
        )
        docs, queries, qrels = ingest(*paths)
        assert len(docs) == 3
        assert len(queries) == 1
        assert qrels == [RelevancePair("q1", "a", 1)]

    def test_duplicate_doc_id_cites_line(self, tmp_path):
        paths = write_corpus(
            tmp_path,
            [{"id": "a", "text": "one"}, {"id": "b", "text": "two"},
             {"id": "c", "text": "three"}, {"id": "a", "text": "again"}],
            [{"id": "q1", "text": "x"}],
            [("q1", "a", 1)],
        )
        with pytest.raises(CorpusError, match=r"docs\.jsonl:4"):
            ingest(*paths)

    def test_dangling_qrel_names_id(self, tmp_path):
        paths = write_corpus(
            tmp_path,
            [{"id": "a", "text": "one"}],
            [{"id": "q1", "text": "x"}],
            [("q1", "zz", 1)],
        )
        with pytest.raises(CorpusError, match="zz"):
            ingest(*paths)

    def test_malformed_json_cites_line(self, tmp_path):
        paths = write_corpus(tmp_path, [{"id": "a", "text": "one"}],
                             [{"id": "q1", "text": "x"}], [("q1", "a", 1)])
        paths[0].write_text('{"id": "a", "text": "one"}\nnot json\n')
        with pytest.raises(CorpusError, match=r"docs\.jsonl:2"):
            ingest(*paths)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_case_and_punctuation(self):
        assert tokenize("The cat, the CAT.") == ["the", "cat", "the", "cat"]

    def test_interior_punctuation_kept(self):
        assert tokenize("can't stop-go") == ["can't", "stop-go"]

    @given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126),
                   max_size=80))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


def make_store(n, seed=0):
    rng = random.Random(seed)
    store = DocumentStore()
    qrels = []
    for i in range(n):
        doc_id = f"d{i}"
        store.add(Document(id=doc_id, text=f"word{i} common"))
        qrels.append(RelevancePair(f"q{i}", doc_id, 1))
        if rng.random() < 0.2:
            qrels.append(RelevancePair(f"q{i}x", doc_id, 1))
    return store, qrels


class TestPartition:
    def test_sizes_50_10(self):
        store, qrels = make_store(100)
        plan = partition_dynamic(store, qrels, ratio_initial=0.5, n_increments=5, seed=3)
        assert len(plan.d_sets[0]) == 50
        assert [len(s) for s in plan.d_sets[1:]] == [10] * 5

    def test_deterministic_serialization(self):
        store, qrels = make_store(60)
        a = partition_dynamic(store, qrels, seed=7).to_json()
        b = partition_dynamic(store, qrels, seed=7).to_json()
        assert a == b

    def test_disjoint_cover_many_seeds(self):
        store, qrels = make_store(53)
        all_ids = set(store.ids())
        for seed in range(50):
            plan = partition_dynamic(store, qrels, ratio_initial=0.4,
                                     n_increments=4, seed=seed)
            seen = set()
            for d_set in plan.d_sets:
                as_set = set(d_set)
                assert not (seen & as_set)
                seen |= as_set
            assert seen == all_ids

    def test_too_small_store(self):
        store, qrels = make_store(4)
        with pytest.raises(ValueError):
            partition_dynamic(store, qrels, n_increments=5)

    def test_query_goes_to_earliest_set(self):
        store, _ = make_store(20)
        # one query relevant to every doc: must land in set 0
        qrels = [RelevancePair("q0", f"d{i}", 1) for i in range(20)]
        plan = partition_dynamic(store, qrels, n_increments=3, train_fraction=0.0, seed=1)
        assert "q0" in plan.q_sets[0]

    def test_train_test_queries_disjoint(self):
        store, qrels = make_store(40, seed=2)
        plan = partition_dynamic(store, qrels, n_increments=3, seed=9)
        train_q = {p.query_id for p in plan.train_pairs}
        assert not (train_q & set(plan.q_sets[0]))

    def test_each_test_query_has_relevant_doc_in_its_set(self):
        store, qrels = make_store(48, seed=5)
        plan = partition_dynamic(store, qrels, n_increments=4, seed=11)
        rel = {}
        for p in qrels:
            rel.setdefault(p.query_id, set()).add(p.doc_id)
        for i, q_set in enumerate(plan.q_sets):
            members = set(plan.d_sets[i])
            for qid in q_set:
                assert rel[qid] & members


class TestChunking:
    def test_512_window_256_stride_128(self):
        chunks = chunk_document("d", 512, window=256, stride=128)
        assert [c.span for c in chunks] == [(0, 256), (128, 384), (256, 512)]

    def test_short_doc_single_chunk(self):
        chunks = chunk_document("d", 100, window=256, stride=128)
        assert [c.span for c in chunks] == [(0, 100)]

    def test_empty_doc(self):
        assert chunk_document("d", 0, window=8, stride=4) == []

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            chunk_document("d", 10, window=0, stride=1)
        with pytest.raises(ValueError):
            chunk_document("d", 10, window=4, stride=5)

    @given(st.integers(1, 500), st.integers(1, 64), st.integers(1, 64))
    @settings(max_examples=300, deadline=None)
    def test_full_coverage(self, n, window, stride):
        stride = min(stride, window)
        chunks = chunk_document("d", n, window=window, stride=stride)
        covered = set()
        prev_start = None
        for c in chunks:
            assert c.end - c.start <= window
            if prev_start is not None:
                assert c.start - prev_start == stride
            prev_start = c.start
            covered.update(range(c.start, c.end))
        assert covered == set(range(n))
