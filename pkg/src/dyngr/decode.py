"""Constrained decoding: FM-index over corpus bytes and beam search.

The FM-index concatenates documents over the byte alphabet with a 0x00
sentinel after each document, so patterns never match across document
boundaries. Beam search runs against any constraint exposing the
DecodingConstraint protocol (prefix tree or FM-index adapter).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .docid_index import PrefixTree
from .scorer import ScorerInterface

SENTINEL = 0

_CP_IVAL = 128  # rank checkpoint spacing
_SA_RATE = 32   # suffix-array sampling rate


class FMIndexError(ValueError):
    pass


def _suffix_array(data: np.ndarray) -> np.ndarray:
    """Prefix-doubling suffix array (O(n log n) rounds of lexsort)."""
    n = data.size
    rank = data.astype(np.int64)
    k = 1
    while True:
        key2 = np.full(n, -1, dtype=np.int64)
        key2[: n - k] = rank[k:]
        order = np.lexsort((key2, rank))
        changed = (rank[order[1:]] != rank[order[:-1]]) | (key2[order[1:]] != key2[order[:-1]])
        new_rank = np.empty(n, dtype=np.int64)
        new_rank[order] = np.concatenate(([0], np.cumsum(changed)))
        rank = new_rank
        if rank[order[-1]] == n - 1:
            return order.astype(np.int64)
        k *= 2


class FMIndex:
    """Succinct substring index supporting count, locate, and extensions.

    Rank queries use per-symbol checkpoints every 128 positions; locate uses
    a suffix array sampled every 32 text positions and walks the LF mapping.
    """

    def __init__(self, documents: Sequence[tuple[str, str]]) -> None:
        if not documents:
            raise FMIndexError("documents must be non-empty")
        parts = []
        self.doc_ids: list[str] = []
        doc_starts = []
        pos = 0
        for doc_id, text in documents:
            raw = text.encode("utf-8")
            if SENTINEL in raw:
                raise FMIndexError(f"document {doc_id!r} contains the sentinel byte 0x00")
            self.doc_ids.append(doc_id)
            doc_starts.append(pos)
            parts.append(raw)
            parts.append(bytes([SENTINEL]))
            pos += len(raw) + 1
        self.text = np.frombuffer(b"".join(parts), dtype=np.uint8)
        self.doc_starts = np.asarray(doc_starts, dtype=np.int64)
        self.sa = _suffix_array(self.text)
        self._derive()

    @classmethod
    def _from_parts(cls, text: np.ndarray, sa: np.ndarray,
                    doc_starts: np.ndarray, doc_ids: list[str]) -> "FMIndex":
        index = cls.__new__(cls)
        index.text = text
        index.sa = sa
        index.doc_starts = doc_starts
        index.doc_ids = doc_ids
        index._derive()
        return index

    def _derive(self) -> None:
        n = self.text.size
        self.n = n
        self.bwt = self.text[(self.sa - 1) % n]
        counts = np.bincount(self.text, minlength=256).astype(np.int64)
        self.cum = np.concatenate(([0], np.cumsum(counts)))
        # checkpointed occurrence table: row j counts symbols in bwt[: j*128]
        n_cp = n // _CP_IVAL + 1
        cp = np.zeros((n_cp, 256), dtype=np.int64)
        for j in range(1, n_cp):
            block = self.bwt[(j - 1) * _CP_IVAL : j * _CP_IVAL]
            cp[j] = cp[j - 1] + np.bincount(block, minlength=256)
        self.checkpoints = cp
        # LF mapping: stable sort groups bwt rows by symbol in row order
        order = np.argsort(self.bwt, kind="stable")
        occ_running = np.empty(n, dtype=np.int64)
        occ_running[order] = np.arange(n) - np.repeat(
            self.cum[:-1], np.bincount(self.bwt, minlength=256))
        self.lf = self.cum[self.bwt] + occ_running
        # sampled suffix array: rows whose text position is a multiple of the rate
        mask = (self.sa % _SA_RATE) == 0
        self.sample_rows = np.flatnonzero(mask)
        self.sample_vals = self.sa[self.sample_rows]
        self._sampled = np.zeros(n, dtype=bool)
        self._sampled[self.sample_rows] = True

    def _rank(self, symbol: int, i: int) -> int:
        q = i // _CP_IVAL
        base = int(self.checkpoints[q, symbol])
        if i % _CP_IVAL:
            base += int(np.count_nonzero(self.bwt[q * _CP_IVAL : i] == symbol))
        return base

    def _rank_all(self, i: int) -> np.ndarray:
        q = i // _CP_IVAL
        row = self.checkpoints[q]
        if i % _CP_IVAL:
            row = row + np.bincount(self.bwt[q * _CP_IVAL : i], minlength=256)
        return row

    def _interval(self, pattern: bytes) -> tuple[int, int]:
        lo, hi = 0, self.n
        for byte in reversed(pattern):
            lo = int(self.cum[byte]) + self._rank(byte, lo)
            hi = int(self.cum[byte]) + self._rank(byte, hi)
            if lo >= hi:
                return 0, 0
        return lo, hi

    @staticmethod
    def _as_bytes(pattern: str | bytes) -> bytes:
        raw = pattern.encode("utf-8") if isinstance(pattern, str) else bytes(pattern)
        if SENTINEL in raw:
            raise FMIndexError("pattern contains the sentinel byte 0x00")
        return raw

    def count(self, pattern: str | bytes) -> int:
        raw = self._as_bytes(pattern)
        if not raw:
            raise FMIndexError("empty pattern")
        lo, hi = self._interval(raw)
        return hi - lo

    def _resolve(self, row: int) -> int:
        steps = 0
        while not self._sampled[row]:
            row = int(self.lf[row])
            steps += 1
        idx = int(np.searchsorted(self.sample_rows, row))
        return (int(self.sample_vals[idx]) + steps) % self.n

    def locate(self, pattern: str | bytes, limit: int = 1000) -> list[tuple[str, int]]:
        """Up to `limit` occurrences as (doc_id, byte offset) pairs."""
        raw = self._as_bytes(pattern)
        if not raw:
            raise FMIndexError("empty pattern")
        lo, hi = self._interval(raw)
        out = []
        for row in range(lo, min(hi, lo + max(0, limit))):
            pos = self._resolve(row)
            d = int(np.searchsorted(self.doc_starts, pos, side="right")) - 1
            out.append((self.doc_ids[d], pos - int(self.doc_starts[d])))
        return out

    def allowed_extensions(self, pattern: str | bytes) -> dict[int, int]:
        """Symbols s with count(pattern + s) > 0, with those counts.

        The empty pattern is accepted as the decoding root; the document
        sentinel is never reported.
        """
        raw = self._as_bytes(pattern)
        lo, hi = self._interval(raw) if raw else (0, self.n)
        if lo >= hi:
            return {}
        lo_counts = self._rank_all(lo)
        hi_counts = self._rank_all(hi)
        diff = hi_counts - lo_counts
        return {int(s): int(diff[s]) for s in np.flatnonzero(diff) if s != SENTINEL}

    def save(self, path: str | Path) -> None:
        ids_blob = np.frombuffer(json.dumps(self.doc_ids).encode("utf-8"), dtype=np.uint8)
        np.savez(path, version=np.int64(1), text=self.text, sa=self.sa,
                 doc_starts=self.doc_starts, doc_ids=ids_blob)

    @classmethod
    def load(cls, path: str | Path) -> "FMIndex":
        with np.load(path) as payload:
            if int(payload["version"]) != 1:
                raise FMIndexError(f"{path}: unsupported index version")
            doc_ids = json.loads(payload["doc_ids"].tobytes().decode("utf-8"))
            return cls._from_parts(payload["text"].copy(), payload["sa"].copy(),
                                   payload["doc_starts"].copy(), doc_ids)


def build_fm_index(documents: Sequence[tuple[str, str]]) -> FMIndex:
    return FMIndex(documents)


def fm_locate(index: FMIndex, pattern: str | bytes, limit: int = 1000) -> list[tuple[str, int]]:
    return index.locate(pattern, limit)


def fm_allowed_extensions(index: FMIndex, pattern: str | bytes) -> dict[int, int]:
    return index.allowed_extensions(pattern)


class DecodingConstraint(Protocol):
    def initial_state(self): ...

    def allowed_next(self, state) -> Sequence[int]: ...

    def advance(self, state, token: int): ...

    def is_terminal(self, state) -> bool: ...


class TrieConstraint:
    """Adapter exposing a PrefixTree to the beam search."""

    def __init__(self, tree: PrefixTree) -> None:
        self.tree = tree

    def initial_state(self):
        return self.tree.root

    def allowed_next(self, state):
        return state.children.keys()

    def advance(self, state, token: int):
        return state.children[token]

    def is_terminal(self, state) -> bool:
        return state.terminal


class _FMState:
    __slots__ = ("lo", "hi", "children")

    def __init__(self, lo: int, hi: int) -> None:
        self.lo = lo
        self.hi = hi
        self.children: dict[int, tuple[int, int]] | None = None


class FMConstraint:
    """Adapter decoding byte n-grams attested by an FM-index."""

    def __init__(self, index: FMIndex) -> None:
        self.index = index

    def initial_state(self) -> _FMState:
        return _FMState(0, self.index.n)

    def _expand(self, state: _FMState) -> dict[int, tuple[int, int]]:
        if state.children is None:
            lo_counts = self.index._rank_all(state.lo)
            hi_counts = self.index._rank_all(state.hi)
            children = {}
            for s in np.flatnonzero(hi_counts - lo_counts):
                s = int(s)
                if s == SENTINEL:
                    continue
                base = int(self.index.cum[s])
                children[s] = (base + int(lo_counts[s]), base + int(hi_counts[s]))
            state.children = children
        return state.children

    def allowed_next(self, state: _FMState):
        return self._expand(state).keys()

    def advance(self, state: _FMState, token: int) -> _FMState:
        lo, hi = self._expand(state)[token]
        return _FMState(lo, hi)

    def is_terminal(self, state: _FMState) -> bool:
        return False


@dataclass
class BeamHypothesis:
    tokens: tuple[int, ...]
    logprob: float
    rank: int = 0


def constrained_beam_search(
    scorer: ScorerInterface,
    constraint: DecodingConstraint,
    query: Sequence[int],
    beam_width: int,
    max_len: int,
) -> list[BeamHypothesis]:
    """Beam search restricted to the constraint's valid continuations.

    A hypothesis completes at a terminal constraint state, at max_len, or at
    a dead end; completed hypotheses do not occupy beam slots. Results are
    sorted by log-probability (ties lexicographic) and ranked from 1.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    active: list[tuple[tuple[int, ...], float, object]] = [((), 0.0, constraint.initial_state())]
    finished: dict[tuple[int, ...], float] = {}
    for _ in range(max_len):
        candidates: list[tuple[tuple[int, ...], float, object]] = []
        for toks, lp, state in active:
            allowed = sorted(constraint.allowed_next(state))
            if not allowed:
                continue
            logps = scorer.next_logprobs(query, toks)
            for tok in allowed:
                candidates.append((toks + (tok,), lp + float(logps[tok]),
                                   constraint.advance(state, tok)))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[1], c[0]))
        next_active = []
        slots_used = 0
        for toks, lp, state in candidates:
            terminal = constraint.is_terminal(state)
            if terminal:
                finished.setdefault(toks, lp)
            if slots_used >= beam_width:
                continue
            if len(toks) < max_len and constraint.allowed_next(state):
                next_active.append((toks, lp, state))
                slots_used += 1
            elif not terminal:
                # length-limited or dead-end completion (n-gram mode)
                finished.setdefault(toks, lp)
                slots_used += 1
        active = next_active
    ordered = sorted(finished.items(), key=lambda item: (-item[1], item[0]))
    return [BeamHypothesis(tokens=toks, logprob=lp, rank=i + 1)
            for i, (toks, lp) in enumerate(ordered[:beam_width])]
