"""Embedding quantizers: k-means, hierarchical cluster docids, product quantization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

NumericDocid = tuple[int, ...]


class QuantizeError(ValueError):
    pass


def _pairwise_sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x||^2 + ||c||^2 - 2 x.c, computed blockwise to bound memory at large k
    d2 = np.empty((x.shape[0], centroids.shape[0]), dtype=np.float64)
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    block = max(1, (1 << 23) // max(1, centroids.shape[0]))
    for lo in range(0, x.shape[0], block):
        hi = min(lo + block, x.shape[0])
        xb = x[lo:hi]
        x_sq = np.einsum("ij,ij->i", xb, xb)
        d2[lo:hi] = x_sq[:, None] + c_sq[None, :] - 2.0 * (xb @ centroids.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


@dataclass
class KMeansModel:
    centroids: np.ndarray
    seed: int
    iters_run: int
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def assign(self, vectors: np.ndarray) -> np.ndarray:
        """Nearest-centroid labels; ties broken toward the lowest index."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        return np.argmin(_pairwise_sq_dists(vectors, self.centroids), axis=1)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    min_d2 = np.einsum("ij,ij->i", x - centroids[0], x - centroids[0])
    for i in range(1, k):
        total = float(min_d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=min_d2 / total))
        centroids[i] = x[idx]
        diff = x - centroids[i]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
    return centroids


def kmeans_fit(
    vectors: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 50,
    tol: float = 1e-7,
) -> KMeansModel:
    """Seeded k-means++ followed by Lloyd iterations.

    Empty clusters are reseeded to the point currently farthest from its
    assigned centroid; inertia is non-increasing across iterations.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise QuantizeError("vectors must be a non-empty 2-D array")
    n = x.shape[0]
    if k < 1:
        raise QuantizeError(f"k must be >= 1, got {k}")
    if k > n:
        raise QuantizeError(f"k={k} exceeds the number of vectors ({n})")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    inertia = float("inf")
    trace: list[float] = []
    iters = 0
    for iters in range(1, max_iters + 1):
        d2 = _pairwise_sq_dists(x, centroids)
        labels = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), labels]
        inertia = float(point_d2.sum())
        trace.append(inertia)

        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        for c in np.flatnonzero(~nonempty):
            far = int(np.argmax(point_d2))
            new_centroids[c] = x[far]
            point_d2[far] = 0.0

        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break
    return KMeansModel(centroids=centroids, seed=seed, iters_run=iters,
                       inertia=inertia, inertia_trace=trace)


# Hierarchical docids: token layout is [cluster path..., PAD..., ordinal].
# Cluster tokens are 0..branching-1, PAD = branching, ordinal j = branching+1+j.


@dataclass
class _HierNode:
    model: KMeansModel | None = None
    children: list["_HierNode"] = field(default_factory=list)
    n_ordinals: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.model is None


@dataclass
class HierarchicalTree:
    """Frozen hierarchical k-means quantizer and its docid assignments."""

    branching: int
    leaf_threshold: int
    seed: int
    root: _HierNode
    max_depth: int
    doc_paths: dict[str, NumericDocid] = field(default_factory=dict)

    @property
    def pad_token(self) -> int:
        return self.branching

    def ordinal_token(self, ordinal: int) -> int:
        return self.branching + 1 + ordinal

    @property
    def docid_length(self) -> int:
        return self.max_depth + 1

    def vocab_size(self, extra_ordinals: int = 0) -> int:
        """Upper bound on token values for docids issued by this tree."""
        max_ord = max((n.n_ordinals for n in self._leaves()), default=0)
        return self.branching + 1 + max_ord + extra_ordinals

    def _leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(node.children)

    def _docid(self, path: list[int], ordinal: int) -> NumericDocid:
        pad = [self.pad_token] * (self.max_depth - len(path))
        return tuple(path + pad + [self.ordinal_token(ordinal)])

    def assign_new(self, doc_id: str, vector: np.ndarray) -> NumericDocid:
        """Encode a new document with the frozen tree; issues a fresh leaf ordinal."""
        if doc_id in self.doc_paths:
            return self.doc_paths[doc_id]
        node = self.root
        path: list[int] = []
        while not node.is_leaf:
            c = int(node.model.assign(vector[None, :])[0])
            path.append(c)
            node = node.children[c]
        docid = self._docid(path, node.n_ordinals)
        node.n_ordinals += 1
        self.doc_paths[doc_id] = docid
        return docid


def hierarchical_docids(
    embeddings: Mapping[str, np.ndarray],
    branching: int = 10,
    leaf_threshold: int = 100,
    seed: int = 0,
    max_iters: int = 25,
) -> tuple[HierarchicalTree, dict[str, NumericDocid]]:
    """Recursively cluster embeddings into unique fixed-length cluster-path docids."""
    if branching < 2:
        raise QuantizeError(f"branching must be >= 2, got {branching}")
    if leaf_threshold < 1:
        raise QuantizeError(f"leaf_threshold must be >= 1, got {leaf_threshold}")
    doc_ids = list(embeddings)
    vectors = np.asarray([embeddings[d] for d in doc_ids], dtype=np.float64)

    leaf_members: list[tuple[_HierNode, list[int], list[int]]] = []

    def build(indices: list[int], path: list[int], node_seed: int) -> tuple[_HierNode, int]:
        node = _HierNode()
        if len(indices) <= leaf_threshold:
            leaf_members.append((node, path, indices))
            return node, len(path)
        k = min(branching, len(indices))
        model = kmeans_fit(vectors[indices], k, seed=node_seed, max_iters=max_iters)
        labels = model.assign(vectors[indices])
        groups = [[indices[i] for i in np.flatnonzero(labels == c)] for c in range(k)]
        if any(len(g) == len(indices) for g in groups):
            # degenerate split (e.g. identical vectors): stop here
            leaf_members.append((node, path, indices))
            return node, len(path)
        node.model = model
        deepest = len(path)
        for c, group in enumerate(groups):
            child, d = build(group, path + [c], node_seed * 31 + c + 1)
            node.children.append(child)
            deepest = max(deepest, d)
        return node, deepest

    root, max_depth = build(list(range(len(doc_ids))), [], seed)
    tree = HierarchicalTree(branching=branching, leaf_threshold=leaf_threshold,
                            seed=seed, root=root, max_depth=max_depth)
    for node, path, indices in leaf_members:
        for ordinal, idx in enumerate(indices):
            tree.doc_paths[doc_ids[idx]] = tree._docid(path, ordinal)
        node.n_ordinals = len(indices)
    return tree, dict(tree.doc_paths)


_PQ_MAGIC = b"PQCB"
_PQ_VERSION = 1


@dataclass
class PQCodebook:
    """Frozen product-quantization codebook: m subspaces with k centroids each."""

    m: int
    k: int
    dim: int
    seed: int
    centroids: np.ndarray  # (m, k, dim // m)

    def __post_init__(self) -> None:
        self.centroids.setflags(write=False)

    @property
    def sub_dim(self) -> int:
        return self.dim // self.m

    def save(self, path: str | Path) -> None:
        with Path(path).open("wb") as fh:
            fh.write(_PQ_MAGIC)
            fh.write(struct.pack("<IIIIq", _PQ_VERSION, self.m, self.k, self.dim, self.seed))
            fh.write(np.ascontiguousarray(self.centroids, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "PQCodebook":
        raw = Path(path).read_bytes()
        if raw[:4] != _PQ_MAGIC:
            raise QuantizeError(f"{path}: not a codebook file")
        version, m, k, dim, seed = struct.unpack("<IIIIq", raw[4:4 + 24])
        if version != _PQ_VERSION:
            raise QuantizeError(f"{path}: unsupported codebook version {version}")
        centroids = np.frombuffer(raw[4 + 24:], dtype=np.float64).reshape(m, k, dim // m).copy()
        return cls(m=m, k=k, dim=dim, seed=seed, centroids=centroids)


def pq_fit(
    vectors: np.ndarray,
    m: int = 4,
    k: int = 1024,
    seed: int = 0,
    max_iters: int = 25,
    tol: float = 1e-7,
) -> PQCodebook:
    """Fit an independent k-means codebook on each subvector slice."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise QuantizeError("vectors must be a non-empty 2-D array")
    dim = x.shape[1]
    if m < 1 or dim % m != 0:
        raise QuantizeError(f"dim={dim} is not divisible by m={m}")
    sub = dim // m
    centroids = np.empty((m, k, sub), dtype=np.float64)
    for s in range(m):
        try:
            model = kmeans_fit(x[:, s * sub:(s + 1) * sub], k,
                               seed=seed + s, max_iters=max_iters, tol=tol)
        except QuantizeError as exc:
            raise QuantizeError(f"subspace {s}: {exc}") from None
        centroids[s] = model.centroids
    return PQCodebook(m=m, k=k, dim=dim, seed=seed, centroids=centroids)


def pq_encode(codebook: PQCodebook, embedding: np.ndarray) -> NumericDocid:
    """Nearest centroid per subspace (lowest index on ties)."""
    return tuple(int(c) for c in pq_encode_many(codebook, embedding[None, :])[0])


def pq_encode_many(codebook: PQCodebook, embeddings: np.ndarray) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.dim:
        raise QuantizeError(
            f"embedding dim {x.shape[-1] if x.ndim else '?'} != codebook dim {codebook.dim}")
    sub = codebook.sub_dim
    codes = np.empty((x.shape[0], codebook.m), dtype=np.int64)
    for s in range(codebook.m):
        d2 = _pairwise_sq_dists(x[:, s * sub:(s + 1) * sub], codebook.centroids[s])
        codes[:, s] = np.argmin(d2, axis=1)
    return codes


def pq_reconstruct(codebook: PQCodebook, code: Sequence[int]) -> np.ndarray:
    if len(code) != codebook.m:
        raise QuantizeError(f"code length {len(code)} != m={codebook.m}")
    for s, c in enumerate(code):
        if not 0 <= c < codebook.k:
            raise QuantizeError(f"code element {c} at position {s} out of range [0,{codebook.k})")
    return np.concatenate([codebook.centroids[s, c] for s, c in enumerate(code)])


def save_tree(tree: HierarchicalTree, path: str | Path) -> None:
    def node_payload(node: _HierNode) -> dict:
        out: dict = {"n_ordinals": node.n_ordinals}
        if not node.is_leaf:
            out["centroids"] = node.model.centroids.tolist()
            out["seed"] = node.model.seed
            out["children"] = [node_payload(c) for c in node.children]
        return out

    payload = {
        "version": 1,
        "branching": tree.branching,
        "leaf_threshold": tree.leaf_threshold,
        "seed": tree.seed,
        "max_depth": tree.max_depth,
        "root": node_payload(tree.root),
        "doc_paths": {d: list(p) for d, p in sorted(tree.doc_paths.items())},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_tree(path: str | Path) -> HierarchicalTree:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != 1:
        raise QuantizeError(f"{path}: unsupported tree version")

    def parse(obj: dict) -> _HierNode:
        node = _HierNode(n_ordinals=obj["n_ordinals"])
        if "children" in obj:
            node.model = KMeansModel(
                centroids=np.asarray(obj["centroids"], dtype=np.float64),
                seed=obj["seed"], iters_run=0, inertia=0.0)
            node.children = [parse(c) for c in obj["children"]]
        return node

    tree = HierarchicalTree(
        branching=payload["branching"],
        leaf_threshold=payload["leaf_threshold"],
        seed=payload["seed"],
        root=parse(payload["root"]),
        max_depth=payload["max_depth"],
        doc_paths={d: tuple(p) for d, p in payload["doc_paths"].items()},
    )
    return tree
