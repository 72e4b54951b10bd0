"""Experiment configuration shared by the runner and the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

METHODS = ("hier-kmeans", "pq", "ngram-fm", "mdgr", "bm25")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    method: str
    docs: str | None = None
    queries: str | None = None
    qrels: str | None = None
    out_dir: str | None = None
    seed: int = 0
    # dynamic-corpus protocol
    ratio_initial: float = 0.5
    n_increments: int = 5
    train_fraction: float = 0.8
    top_k: int = 10
    # embedding
    embed_dim: int = 128
    # product quantization (pq, mdgr)
    pq_m: int = 4
    pq_k: int = 1024
    kmeans_iters: int = 25
    # hierarchical clustering (hier-kmeans)
    branching: int = 10
    leaf_threshold: int = 100
    # chunking (mdgr, training data)
    window: int = 256
    stride: int = 128
    # decoding
    beam_width: int = 20
    beta: float = 1.0
    ngram_max_len: int = 16
    ngram_locate_limit: int = 100
    # reference scorer
    lam: float = 0.1
    buckets: int = 4096
    pseudo_query_len: int = 8
    # mdgr expansion mode
    expansion: str = "code"
    # bm25
    bm25_k1: float = 0.9
    bm25_b: float = 0.4

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(
                f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if not 0.0 < self.ratio_initial < 1.0:
            raise ConfigError("ratio_initial must be in (0,1)")
        if self.n_increments < 1:
            raise ConfigError("n_increments must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.beam_width < 1:
            raise ConfigError("beam_width must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.embed_dim < 8:
            raise ConfigError("embed_dim must be >= 8")
        if self.window < 1 or not 1 <= self.stride <= self.window:
            raise ConfigError("need window >= 1 and 1 <= stride <= window")
        if self.method in ("pq", "mdgr"):
            if self.pq_m < 1 or self.embed_dim % self.pq_m != 0:
                raise ConfigError("embed_dim must be divisible by pq_m")
            if self.pq_k < 1:
                raise ConfigError("pq_k must be >= 1")
            if self.expansion not in ("code", "token"):
                raise ConfigError("expansion must be 'code' or 'token'")
        if self.method == "hier-kmeans":
            if self.branching < 2:
                raise ConfigError("branching must be >= 2")
            if self.leaf_threshold < 1:
                raise ConfigError("leaf_threshold must be >= 1")
        if self.method == "ngram-fm":
            if self.ngram_max_len < 1:
                raise ConfigError("ngram_max_len must be >= 1")
            if self.ngram_locate_limit < 1:
                raise ConfigError("ngram_locate_limit must be >= 1")
        if self.method == "bm25":
            if self.bm25_k1 <= 0 or not 0.0 <= self.bm25_b <= 1.0:
                raise ConfigError("need bm25_k1 > 0 and bm25_b in [0,1]")
        if self.lam <= 0:
            raise ConfigError("lam must be > 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        if "method" not in payload:
            raise ConfigError("config must set 'method'")
        return cls(**payload)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ImportError:
                raise ConfigError(
                    f"{path}: TOML configs need Python 3.11+; use JSON instead") from None
            payload = tomllib.loads(path.read_text(encoding="utf-8"))
        else:
            payload = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(payload)
