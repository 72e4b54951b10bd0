"""Deterministic hashed TF-IDF embeddings standing in for a neural encoder."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hashing import seeded_hash


class Embedder:
    """Hashed TF-IDF text embedder with an idf table frozen on the initial corpus.

    Each token id is hashed (seeded) to one of `dim` buckets with a +/-1 sign;
    bucket weights are tf*idf and the result is L2-normalized. Empty input
    yields the zero vector. With `use_idf=False` weights are raw term
    frequencies.
    """

    def __init__(self, dim: int = 256, seed: int = 0, use_idf: bool = True) -> None:
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.use_idf = use_idf
        self._idf: dict[int, float] = {}
        self._default_idf = 1.0
        self._fitted = False

    def fit_idf(self, token_seqs: Iterable[Sequence[int]]) -> None:
        """Compute idf over the given documents and freeze it."""
        if self._fitted:
            raise RuntimeError("idf table is frozen after fit_idf")
        df: Counter[int] = Counter()
        n_docs = 0
        for seq in token_seqs:
            n_docs += 1
            df.update(set(seq))
        self._idf = {
            t: math.log((1.0 + n_docs) / (1.0 + c)) + 1.0 for t, c in df.items()
        }
        self._default_idf = math.log(1.0 + n_docs) + 1.0
        self._fitted = True

    def _bucket_sign(self, token_id: int) -> tuple[int, float]:
        h = seeded_hash(self.seed, token_id)
        return h % self.dim, (1.0 if (h >> 32) & 1 else -1.0)

    def embed(self, tokens: Sequence[int]) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        if not tokens:
            return vec
        counts = Counter(tokens)
        for tid in sorted(counts):
            bucket, sign = self._bucket_sign(tid)
            weight = float(counts[tid])
            if self.use_idf:
                weight *= self._idf.get(tid, self._default_idf)
            vec[bucket] += sign * weight
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_many(self, token_seqs: Sequence[Sequence[int]]) -> np.ndarray:
        out = np.zeros((len(token_seqs), self.dim), dtype=np.float64)
        for i, seq in enumerate(token_seqs):
            out[i] = self.embed(seq)
        return out

    def save_idf(self, path: str | Path) -> None:
        payload = {
            "dim": self.dim,
            "seed": self.seed,
            "use_idf": self.use_idf,
            "default_idf": self._default_idf,
            "idf": {str(t): v for t, v in sorted(self._idf.items())},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load_idf(cls, path: str | Path) -> "Embedder":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        emb = cls(dim=payload["dim"], seed=payload["seed"], use_idf=payload["use_idf"])
        emb._idf = {int(t): v for t, v in payload["idf"].items()}
        emb._default_idf = payload["default_idf"]
        emb._fitted = True
        return emb
