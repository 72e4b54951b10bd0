"""Run files and the metrics report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class RunFileError(ValueError):
    pass


@dataclass
class RetrievalRun:
    """Ranked results for a set of queries at one experiment stage."""

    method: str
    stage: int
    results: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def validate(self) -> None:
        for qid, ranked in self.results.items():
            docs = [d for d, _ in ranked]
            if len(docs) != len(set(docs)):
                raise RunFileError(f"query {qid!r}: duplicate documents in ranking")
            scores = [s for _, s in ranked]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise RunFileError(f"query {qid!r}: scores increase down the ranking")

    def write(self, path: str | Path) -> None:
        self.validate()
        lines = []
        for qid, ranked in self.results.items():
            for rank, (doc, score) in enumerate(ranked, start=1):
                lines.append(f"{qid}\t{doc}\t{rank}\t{score!r}\t{self.method}\t{self.stage}\n")
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "RetrievalRun":
        method = None
        stage = None
        results: dict[str, list[tuple[str, float]]] = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 6:
                    raise RunFileError(f"{path}:{lineno}: expected 6 tab-separated fields")
                qid, doc, rank_s, score_s, row_method, stage_s = parts
                if method is None:
                    method, stage = row_method, int(stage_s)
                elif row_method != method or int(stage_s) != stage:
                    raise RunFileError(f"{path}:{lineno}: mixed method/stage in one file")
                ranked = results.setdefault(qid, [])
                if int(rank_s) != len(ranked) + 1:
                    raise RunFileError(f"{path}:{lineno}: rank {rank_s} out of sequence")
                ranked.append((doc, float(score_s)))
        if method is None:
            raise RunFileError(f"{path}: empty run file")
        run = cls(method=method, stage=stage, results=results)
        run.validate()
        return run


@dataclass
class StageMetrics:
    stage: int
    hit_initial: float
    hit_new: float | None = None
    idbi: float | None = None
    scorer_hash: str | None = None


@dataclass
class MetricsReport:
    """Per-stage retrieval quality plus the summary dynamic-corpus metrics."""

    method: str
    seed: int
    k: int
    stages: list[StageMetrics]
    f_n: float
    ga_n: float
    semantic_familiarity: float | None = None
    effective_vocab_size: int | None = None

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "seed": self.seed,
            "k": self.k,
            "stages": [
                {
                    "stage": s.stage,
                    "hit_initial": s.hit_initial,
                    "hit_new": s.hit_new,
                    "idbi": s.idbi,
                    "scorer_hash": s.scorer_hash,
                }
                for s in self.stages
            ],
            "f_n": self.f_n,
            "ga_n": self.ga_n,
            "semantic_familiarity": self.semantic_familiarity,
            "effective_vocab_size": self.effective_vocab_size,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, blob: str) -> "MetricsReport":
        payload = json.loads(blob)
        return cls(
            method=payload["method"],
            seed=payload["seed"],
            k=payload["k"],
            stages=[StageMetrics(**s) for s in payload["stages"]],
            f_n=payload["f_n"],
            ga_n=payload["ga_n"],
            semantic_familiarity=payload["semantic_familiarity"],
            effective_vocab_size=payload["effective_vocab_size"],
        )

    def to_csv(self) -> str:
        lines = ["stage,hit_initial,hit_new,idbi"]
        for s in self.stages:
            new = "" if s.hit_new is None else repr(s.hit_new)
            bias = "" if s.idbi is None else repr(s.idbi)
            lines.append(f"{s.stage},{s.hit_initial!r},{new},{bias}")
        return "\n".join(lines) + "\n"
