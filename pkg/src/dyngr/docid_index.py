"""Docid registry and prefix tree for constrained decoding."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Sequence

Docid = tuple[int, ...]


class DocidError(ValueError):
    pass


class _Node:
    __slots__ = ("children", "terminal")

    def __init__(self) -> None:
        self.children: dict[int, _Node] = {}
        self.terminal = False


class PrefixTree:
    """Stores every registered docid as a root-to-terminal path."""

    def __init__(self) -> None:
        self.root = _Node()

    def insert(self, docid: Sequence[int]) -> None:
        node = self.root
        for tok in docid:
            child = node.children.get(tok)
            if child is None:
                child = _Node()
                node.children[tok] = child
            node = child
        node.terminal = True

    def _find(self, prefix: Sequence[int]) -> _Node | None:
        node = self.root
        for tok in prefix:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def allowed_next(self, prefix: Sequence[int]) -> set[int]:
        node = self._find(prefix)
        return set(node.children) if node is not None else set()

    def is_terminal(self, seq: Sequence[int]) -> bool:
        node = self._find(seq)
        return node is not None and node.terminal

    def contains(self, docid: Sequence[int]) -> bool:
        return self.is_terminal(docid)

    def has_children(self, prefix: Sequence[int]) -> bool:
        node = self._find(prefix)
        return node is not None and bool(node.children)

    def iter_terminal_paths(self) -> Iterator[Docid]:
        stack: list[tuple[_Node, Docid]] = [(self.root, ())]
        while stack:
            node, path = stack.pop()
            if node.terminal:
                yield path
            for tok in sorted(node.children, reverse=True):
                stack.append((node.children[tok], path + (tok,)))

    def max_depth(self) -> int:
        depth = 0
        stack: list[tuple[_Node, int]] = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            depth = max(depth, d)
            for child in node.children.values():
                stack.append((child, d + 1))
        return depth


class DocidRegistry:
    """Many-to-many docid <-> document mapping.

    `kind="numeric"` enforces a uniform docid length; `kind="text"` accepts
    token sequences of any positive length.
    """

    def __init__(self, kind: str = "numeric", length: int | None = None) -> None:
        if kind not in ("numeric", "text"):
            raise DocidError(f"unknown registry kind {kind!r}")
        if kind == "numeric" and (length is None or length < 1):
            raise DocidError("numeric registries require a positive docid length")
        self.kind = kind
        self.length = length
        self.docid_to_docs: dict[Docid, set[str]] = {}
        self.doc_to_docids: dict[str, list[Docid]] = {}

    def __len__(self) -> int:
        return len(self.docid_to_docs)

    def check(self, docid: Sequence[int]) -> Docid:
        docid = tuple(int(t) for t in docid)
        if not docid:
            raise DocidError("empty docid")
        if self.kind == "numeric" and len(docid) != self.length:
            raise DocidError(
                f"docid length {len(docid)} != registry length {self.length}")
        return docid

    def lookup(self, docid: Sequence[int]) -> set[str]:
        return set(self.docid_to_docs.get(tuple(docid), ()))

    def docids_of(self, doc_id: str) -> list[Docid]:
        return list(self.doc_to_docids.get(doc_id, ()))

    def all_tokens(self) -> set[int]:
        out: set[int] = set()
        for docid in self.docid_to_docs:
            out.update(docid)
        return out

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for docid in sorted(self.docid_to_docs):
                docs = sorted(self.docid_to_docs[docid])
                fh.write(json.dumps({"docid": list(docid), "docs": docs}) + "\n")

    @classmethod
    def load(cls, path: str | Path, kind: str = "numeric",
             length: int | None = None) -> tuple["DocidRegistry", PrefixTree]:
        registry = cls(kind=kind, length=length)
        tree = PrefixTree()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                for doc in obj["docs"]:
                    register(registry, tree, obj["docid"], doc)
        return registry, tree


def register(registry: DocidRegistry, tree: PrefixTree,
             docid: Sequence[int], doc_ref: str) -> None:
    """Add a (docid, document) pair to the registry and the prefix tree.

    Re-registering an existing pair is a no-op; existing tree paths are never
    altered.
    """
    docid = registry.check(docid)
    docs = registry.docid_to_docs.get(docid)
    if docs is None:
        docs = set()
        registry.docid_to_docs[docid] = docs
        tree.insert(docid)
    if doc_ref not in docs:
        docs.add(doc_ref)
        registry.doc_to_docids.setdefault(doc_ref, []).append(docid)


def allowed_next(tree: PrefixTree, prefix: Sequence[int]) -> set[int]:
    return tree.allowed_next(prefix)


def lookup(registry: DocidRegistry, docid: Sequence[int]) -> set[str]:
    return registry.lookup(docid)


def tree_fingerprint(tree: PrefixTree) -> bytes:
    """Canonical byte serialization of all terminal paths (for invariance checks)."""
    paths = sorted(tree.iter_terminal_paths())
    return json.dumps([list(p) for p in paths]).encode()


def registry_tokens(registries: Iterable[DocidRegistry]) -> set[int]:
    out: set[int] = set()
    for reg in registries:
        out |= reg.all_tokens()
    return out
