"""Corpus ingestion, tokenization, dynamic partitioning, and chunking."""

from __future__ import annotations

import json
import random
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Malformed input files or inconsistent ids."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip punctuation at token edges."""
    out = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and unicodedata.category(raw[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(raw[end - 1]).startswith("P"):
            end -= 1
        if end > start:
            out.append(raw[start:end])
    return out


class Vocabulary:
    """Incremental token-string <-> id mapping with stable ids."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._tokens: list[str] = []

    def __len__(self) -> int:
        return len(self._tokens)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        ids = self._ids
        out = []
        for tok in tokens:
            tid = ids.get(tok)
            if tid is None:
                tid = len(self._tokens)
                ids[tok] = tid
                self._tokens.append(tok)
            out.append(tid)
        return out

    def token(self, tid: int) -> str:
        return self._tokens[tid]

    def id_of(self, tok: str) -> int | None:
        return self._ids.get(tok)


@dataclass
class Document:
    id: str
    text: str
    tokens: list[int] = field(default_factory=list)
    title: str | None = None
    url: str | None = None


@dataclass
class Query:
    id: str
    text: str
    tokens: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class RelevancePair:
    query_id: str
    doc_id: str
    grade: int = 1


class DocumentStore:
    """Insertion-ordered document collection sharing one vocabulary."""

    def __init__(self, vocab: Vocabulary | None = None) -> None:
        self.vocab = vocab if vocab is not None else Vocabulary()
        self._docs: dict[str, Document] = {}

    def add(self, doc: Document) -> None:
        if doc.id in self._docs:
            raise CorpusError(f"duplicate document id {doc.id!r}")
        doc.tokens = self.vocab.encode(tokenize(doc.text))
        self._docs[doc.id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __getitem__(self, doc_id: str) -> Document:
        return self._docs[doc_id]

    def ids(self) -> list[str]:
        return list(self._docs)

    def __iter__(self):
        return iter(self._docs.values())


class QueryStore:
    def __init__(self, vocab: Vocabulary) -> None:
        self.vocab = vocab
        self._queries: dict[str, Query] = {}

    def add(self, query: Query) -> None:
        if query.id in self._queries:
            raise CorpusError(f"duplicate query id {query.id!r}")
        query.tokens = self.vocab.encode(tokenize(query.text))
        self._queries[query.id] = query

    def __len__(self) -> int:
        return len(self._queries)

    def __contains__(self, qid: str) -> bool:
        return qid in self._queries

    def __getitem__(self, qid: str) -> Query:
        return self._queries[qid]

    def ids(self) -> list[str]:
        return list(self._queries)

    def __iter__(self):
        return iter(self._queries.values())


def _read_jsonl(path: Path, required: tuple[str, ...]) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            for key in required:
                if key not in obj:
                    raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
            yield lineno, obj


def ingest(
    doc_path: str | Path,
    query_path: str | Path,
    qrel_path: str | Path,
) -> tuple[DocumentStore, QueryStore, list[RelevancePair]]:
    """Load documents (JSONL), queries (JSONL), and qrels (TSV).

    Rejects duplicate ids (citing the offending line) and qrels whose
    query/doc ids do not resolve.
    """
    docs = DocumentStore()
    for lineno, obj in _read_jsonl(Path(doc_path), ("id", "text")):
        try:
            docs.add(Document(id=str(obj["id"]), text=obj["text"],
                              title=obj.get("title"), url=obj.get("url")))
        except CorpusError as exc:
            raise CorpusError(f"{doc_path}:{lineno}: {exc}") from None

    queries = QueryStore(docs.vocab)
    for lineno, obj in _read_jsonl(Path(query_path), ("id", "text")):
        try:
            queries.add(Query(id=str(obj["id"]), text=obj["text"]))
        except CorpusError as exc:
            raise CorpusError(f"{query_path}:{lineno}: {exc}") from None

    qrels: list[RelevancePair] = []
    with Path(qrel_path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(
                    f"{qrel_path}:{lineno}: expected query_id<TAB>doc_id<TAB>grade")
            qid, did, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise CorpusError(f"{qrel_path}:{lineno}: grade {grade_s!r} is not an integer") from None
            if grade < 0:
                raise CorpusError(f"{qrel_path}:{lineno}: negative grade {grade}")
            if qid not in queries:
                raise CorpusError(f"{qrel_path}:{lineno}: unknown query id {qid!r}")
            if did not in docs:
                raise CorpusError(f"{qrel_path}:{lineno}: unknown doc id {did!r}")
            qrels.append(RelevancePair(query_id=qid, doc_id=did, grade=grade))
    return docs, queries, qrels


@dataclass
class DynamicPlan:
    """Partition of the corpus into an initial set and growth increments.

    d_sets[0] is the initial corpus; d_sets[1:] are the increments added one
    at a time. q_sets[i] holds the test queries whose earliest relevant
    document lives in d_sets[i]. train_pairs are the relevance pairs used to
    train on the initial corpus.
    """

    d_sets: list[list[str]]
    q_sets: list[list[str]]
    train_pairs: list[RelevancePair]
    seed: int

    @property
    def n_increments(self) -> int:
        return len(self.d_sets) - 1

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "d_sets": self.d_sets,
            "q_sets": self.q_sets,
            "train_pairs": [[p.query_id, p.doc_id, p.grade] for p in self.train_pairs],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, blob: str) -> "DynamicPlan":
        payload = json.loads(blob)
        return cls(
            d_sets=[list(s) for s in payload["d_sets"]],
            q_sets=[list(s) for s in payload["q_sets"]],
            train_pairs=[RelevancePair(q, d, g) for q, d, g in payload["train_pairs"]],
            seed=payload["seed"],
        )


def partition_dynamic(
    store: DocumentStore,
    qrels: Sequence[RelevancePair],
    ratio_initial: float = 0.5,
    n_increments: int = 5,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> DynamicPlan:
    """Split the corpus into an initial set plus near-equal increments.

    Queries are assigned to the earliest set containing one of their relevant
    documents; the initial set's queries are further split into training pairs
    and a held-out test set.
    """
    if not 0.0 < ratio_initial < 1.0:
        raise ValueError(f"ratio_initial must be in (0,1), got {ratio_initial}")
    if n_increments < 1:
        raise ValueError(f"n_increments must be >= 1, got {n_increments}")
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in [0,1], got {train_fraction}")
    n_docs = len(store)
    if n_docs < n_increments + 1:
        raise ValueError(
            f"store has {n_docs} docs; need at least {n_increments + 1}")

    rng = random.Random(seed)
    doc_ids = sorted(store.ids())
    rng.shuffle(doc_ids)
    n_initial = round(ratio_initial * n_docs)
    n_initial = min(max(n_initial, 1), n_docs - n_increments)
    d_sets = [sorted(doc_ids[:n_initial])]
    rest = doc_ids[n_initial:]
    base, extra = divmod(len(rest), n_increments)
    pos = 0
    for i in range(n_increments):
        size = base + (1 if i < extra else 0)
        d_sets.append(sorted(rest[pos:pos + size]))
        pos += size

    set_of_doc = {}
    for i, ids in enumerate(d_sets):
        for did in ids:
            set_of_doc[did] = i

    # Queries land in the earliest set holding any of their relevant docs.
    rel_by_query: dict[str, list[str]] = {}
    for pair in qrels:
        if pair.grade > 0:
            rel_by_query.setdefault(pair.query_id, []).append(pair.doc_id)
    query_set: dict[str, int] = {}
    for qid in sorted(rel_by_query):
        query_set[qid] = min(set_of_doc[d] for d in rel_by_query[qid])

    q_by_set: list[list[str]] = [[] for _ in d_sets]
    for qid in sorted(query_set):
        q_by_set[query_set[qid]].append(qid)

    initial_queries = list(q_by_set[0])
    rng.shuffle(initial_queries)
    n_train = round(train_fraction * len(initial_queries))
    train_queries = set(initial_queries[:n_train])
    q_sets = [sorted(q for q in q_by_set[0] if q not in train_queries)]
    q_sets.extend(sorted(qs) for qs in q_by_set[1:])

    initial_docs = set(d_sets[0])
    train_pairs = [
        p for p in qrels
        if p.query_id in train_queries and p.doc_id in initial_docs and p.grade > 0
    ]
    return DynamicPlan(d_sets=d_sets, q_sets=q_sets, train_pairs=train_pairs, seed=seed)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    start: int
    end: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def chunk_document(doc_id: str, n_tokens: int, window: int, stride: int) -> list[Chunk]:
    """Sliding-window chunks; a trailing chunk is kept only if it adds coverage."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if not 1 <= stride <= window:
        raise ValueError(f"stride must be in [1, window], got {stride}")
    chunks: list[Chunk] = []
    start = 0
    while start < n_tokens:
        end = min(start + window, n_tokens)
        if chunks and end <= chunks[-1].end:
            break
        chunks.append(Chunk(doc_id=doc_id, index=len(chunks), start=start, end=end))
        start += stride
    return chunks


def chunk_tokens(tokens: Sequence[int], chunk: Chunk) -> Sequence[int]:
    return tokens[chunk.start:chunk.end]
