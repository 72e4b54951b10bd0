"""Deterministic synthetic benchmark: templated vocabulary, noisy substring queries."""

from __future__ import annotations

import json
import random
from pathlib import Path

from .corpus import Document, DocumentStore, Query, QueryStore, RelevancePair
from .fileio import atomic_write_text

_CONSONANTS = "bcdfgklmnprstvz"
_VOWELS = "aeiou"


def _word_list(rng: random.Random) -> list[str]:
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words = [a + b for a in syllables for b in syllables]
    rng.shuffle(words)
    return words


def generate_benchmark(
    n_docs: int = 2000,
    seed: int = 1234,
    n_topics: int = 40,
    topic_words: int = 40,
    shared_words: int = 300,
    doc_vocab: int = 12,
    doc_len: tuple[int, int] = (160, 200),
    topic_rate: float = 0.75,
    query_len: int = 6,
    extra_query_rate: float = 0.2,
    drop_rate: float = 0.3,
    swap_rate: float = 0.3,
) -> tuple[DocumentStore, QueryStore, list[RelevancePair]]:
    """Build an in-memory corpus of templated documents with substring queries.

    Each document draws a small private vocabulary from one topic's word pool
    plus shared filler words; each query copies a contiguous span of its
    source document and perturbs it (token drop / substitution).
    """
    rng = random.Random(seed)
    words = _word_list(rng)
    need = n_topics * topic_words + shared_words
    if need > len(words):
        raise ValueError(f"vocabulary too small for {n_topics} topics")
    topics = [words[i * topic_words:(i + 1) * topic_words] for i in range(n_topics)]
    shared = words[n_topics * topic_words:need]

    docs = DocumentStore()
    queries = QueryStore(docs.vocab)
    qrels: list[RelevancePair] = []

    doc_tokens: dict[str, list[str]] = {}
    for i in range(n_docs):
        topic = topics[i % n_topics]
        sub_vocab = rng.sample(topic, min(doc_vocab, len(topic)))
        length = rng.randint(*doc_len)
        tokens = [
            rng.choice(sub_vocab) if rng.random() < topic_rate else rng.choice(shared)
            for _ in range(length)
        ]
        doc_id = f"d{i:05d}"
        doc_tokens[doc_id] = tokens
        docs.add(Document(id=doc_id, text=" ".join(tokens),
                          title=" ".join(sub_vocab[:2])))

    q_count = 0
    for i in range(n_docs):
        doc_id = f"d{i:05d}"
        n_queries = 1 + (1 if rng.random() < extra_query_rate else 0)
        for _ in range(n_queries):
            tokens = doc_tokens[doc_id]
            start = rng.randrange(0, len(tokens) - query_len)
            span = list(tokens[start:start + query_len])
            if rng.random() < drop_rate:
                span.pop(rng.randrange(len(span)))
            if rng.random() < swap_rate:
                span[rng.randrange(len(span))] = rng.choice(topics[i % n_topics])
            qid = f"q{q_count:05d}"
            q_count += 1
            queries.add(Query(id=qid, text=" ".join(span)))
            qrels.append(RelevancePair(query_id=qid, doc_id=doc_id, grade=1))
    return docs, queries, qrels


def write_benchmark(out_dir: str | Path, **kwargs) -> dict[str, str]:
    """Generate the benchmark and write docs.jsonl / queries.jsonl / qrels.tsv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs, queries, qrels = generate_benchmark(**kwargs)
    doc_lines = [
        json.dumps({"id": d.id, "text": d.text, "title": d.title}) for d in docs
    ]
    query_lines = [json.dumps({"id": q.id, "text": q.text}) for q in queries]
    qrel_lines = [f"{p.query_id}\t{p.doc_id}\t{p.grade}" for p in qrels]
    paths = {
        "docs": str(out / "docs.jsonl"),
        "queries": str(out / "queries.jsonl"),
        "qrels": str(out / "qrels.tsv"),
    }
    atomic_write_text(paths["docs"], "\n".join(doc_lines) + "\n")
    atomic_write_text(paths["queries"], "\n".join(query_lines) + "\n")
    atomic_write_text(paths["qrels"], "\n".join(qrel_lines) + "\n")
    return paths
