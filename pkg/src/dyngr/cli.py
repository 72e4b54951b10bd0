"""Command-line frontend: partition, build, train, add, retrieve, evaluate, run."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .corpus import CorpusError, DynamicPlan, ingest, partition_dynamic
from .evalharness.metrics import hit_at_k, idbi, qrels_by_query
from .evalharness.runfiles import RetrievalRun, StageMetrics
from .evalharness.runner import (compute_familiarity, evaluate_queries,
                                 make_strategy, summarize_stages,
                                 train_strategy_scorer)
from .fileio import atomic_write_text
from .scorer import ReferenceScorer
from .synthetic import write_benchmark


class CLIError(Exception):
    """User-actionable failure; printed without a traceback."""


def _out_dir(config: ExperimentConfig) -> Path:
    if not config.out_dir:
        raise CLIError("config must set out_dir (or pass --out-dir)")
    return Path(config.out_dir)


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        raise CLIError("--config is required")
    if args.method:
        config.method = args.method
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir:
        config.out_dir = args.out_dir
    config.validate()
    return config


def _load_stores(config: ExperimentConfig):
    if not (config.docs and config.queries and config.qrels):
        raise CLIError("config must name docs/queries/qrels paths")
    return ingest(config.docs, config.queries, config.qrels)


def _plan_path(out: Path) -> Path:
    return out / "plan.json"


def _load_plan(out: Path) -> DynamicPlan:
    path = _plan_path(out)
    if not path.exists():
        raise CLIError(f"{path} not found; run `dyngr partition` first")
    return DynamicPlan.from_json(path.read_text(encoding="utf-8"))


def _index_dir(out: Path) -> Path:
    return out / "index"


def _load_state(out: Path) -> dict:
    path = _index_dir(out) / "state.json"
    if not path.exists():
        raise CLIError(f"{path} not found; run `dyngr build` first")
    return json.loads(path.read_text(encoding="utf-8"))


def _save_state(out: Path, state: dict) -> None:
    atomic_write_text(_index_dir(out) / "state.json", json.dumps(state, sort_keys=True))


def _indexed_ids(plan: DynamicPlan, stages: list[int]) -> list[str]:
    out: list[str] = []
    for s in stages:
        out.extend(plan.d_sets[s])
    return out


def _load_strategy(config: ExperimentConfig, docs, plan: DynamicPlan, out: Path):
    state = _load_state(out)
    if state["method"] != config.method:
        raise CLIError(
            f"index was built for method {state['method']!r}, config says {config.method!r}")
    strategy = make_strategy(config, docs)
    strategy.load(_index_dir(out), _indexed_ids(plan, state["stages"]))
    return strategy, state


def impl_partition(config: ExperimentConfig) -> Path:
    out = _out_dir(config)
    docs, _queries, qrels = _load_stores(config)
    plan = partition_dynamic(docs, qrels, ratio_initial=config.ratio_initial,
                             n_increments=config.n_increments,
                             train_fraction=config.train_fraction, seed=config.seed)
    atomic_write_text(_plan_path(out), plan.to_json())
    return _plan_path(out)


def impl_build(config: ExperimentConfig) -> Path:
    out = _out_dir(config)
    docs, _queries, _qrels = _load_stores(config)
    plan = _load_plan(out)
    strategy = make_strategy(config, docs)
    strategy.build(plan.d_sets[0])
    _index_dir(out).mkdir(parents=True, exist_ok=True)
    strategy.save(_index_dir(out))
    _save_state(out, {"method": config.method, "stages": [0]})
    return _index_dir(out)


def impl_train(config: ExperimentConfig) -> Path | None:
    out = _out_dir(config)
    docs, queries, _qrels = _load_stores(config)
    plan = _load_plan(out)
    strategy, _state = _load_strategy(config, docs, plan, out)
    if not strategy.needs_scorer:
        return None
    train_strategy_scorer(strategy, plan, queries)
    strategy.save_scorer(_index_dir(out))
    return _index_dir(out) / "scorer.bin"


def impl_add(config: ExperimentConfig, stage: int) -> None:
    out = _out_dir(config)
    docs, _queries, _qrels = _load_stores(config)
    plan = _load_plan(out)
    strategy, state = _load_strategy(config, docs, plan, out)
    expected = max(state["stages"]) + 1
    if stage != expected:
        raise CLIError(f"next stage to add is {expected}, got {stage}")
    if stage > plan.n_increments:
        raise CLIError(f"plan has {plan.n_increments} increments; stage {stage} out of range")
    strategy.index_new(plan.d_sets[stage])
    strategy.save(_index_dir(out))
    _save_state(out, {"method": config.method, "stages": state["stages"] + [stage]})


def impl_retrieve(config: ExperimentConfig, stage: int) -> list[Path]:
    out = _out_dir(config)
    docs, queries, _qrels = _load_stores(config)
    plan = _load_plan(out)
    strategy, state = _load_strategy(config, docs, plan, out)
    if stage not in state["stages"]:
        raise CLIError(f"stage {stage} is not indexed yet; run `dyngr add --stage {stage}`")
    if strategy.needs_scorer:
        scorer_path = _index_dir(out) / "scorer.bin"
        if not scorer_path.exists():
            raise CLIError(f"{scorer_path} not found; run `dyngr train` first")
        strategy.load_scorer(_index_dir(out))
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    written = []
    run = evaluate_queries(strategy, queries, plan.q_sets[0], stage, config.top_k)
    path = runs_dir / f"stage{stage}-initial.tsv"
    run.write(path)
    written.append(path)
    if stage >= 1:
        run = evaluate_queries(strategy, queries, plan.q_sets[stage], stage, config.top_k)
        path = runs_dir / f"stage{stage}-new.tsv"
        run.write(path)
        written.append(path)
    return written


def impl_evaluate(config: ExperimentConfig) -> Path:
    out = _out_dir(config)
    docs, _queries, qrels = _load_stores(config)
    plan = _load_plan(out)
    qrels_map = qrels_by_query(qrels)
    scorer_hash = None
    scorer_path = _index_dir(out) / "scorer.bin"
    if scorer_path.exists():
        scorer_hash = ReferenceScorer.load(scorer_path).state_hash()

    stages = []
    initial_set = set(plan.d_sets[0])
    new_set: set[str] = set()
    for o in range(plan.n_increments + 1):
        init_path = out / "runs" / f"stage{o}-initial.tsv"
        if not init_path.exists():
            raise CLIError(f"{init_path} not found; run `dyngr retrieve --stage {o}`")
        run_init = RetrievalRun.read(init_path)
        hit_new = bias = None
        if o >= 1:
            new_set.update(plan.d_sets[o])
            new_path = out / "runs" / f"stage{o}-new.tsv"
            if not new_path.exists():
                raise CLIError(f"{new_path} not found; run `dyngr retrieve --stage {o}`")
            run_new = RetrievalRun.read(new_path)
            hit_new = hit_at_k(run_new.results, qrels_map, config.top_k)
            combined = {**run_init.results, **run_new.results}
            bias = (idbi(combined, initial_set, new_set, config.top_k)
                    if combined and new_set else None)
        stages.append(StageMetrics(
            stage=o,
            hit_initial=hit_at_k(run_init.results, qrels_map, config.top_k),
            hit_new=hit_new,
            idbi=bias,
            scorer_hash=scorer_hash))

    strategy, _state = _load_strategy(config, docs, plan, out)
    report = summarize_stages(config, stages,
                              compute_familiarity(strategy, plan.d_sets[0]),
                              strategy.effective_vocab())
    path = out / "report.json"
    atomic_write_text(path, report.to_json() + "\n")
    return path


def impl_run(config: ExperimentConfig) -> Path:
    impl_partition(config)
    impl_build(config)
    impl_train(config)
    impl_retrieve(config, 0)
    plan = _load_plan(_out_dir(config))
    for o in range(1, plan.n_increments + 1):
        impl_add(config, o)
        impl_retrieve(config, o)
    return impl_evaluate(config)


def cmd_partition(args) -> int:
    path = impl_partition(_load_config(args))
    print(f"wrote {path}")
    return 0


def cmd_build(args) -> int:
    path = impl_build(_load_config(args))
    print(f"built index in {path}")
    return 0


def cmd_train(args) -> int:
    path = impl_train(_load_config(args))
    print(f"wrote {path}" if path else "method needs no scorer; nothing to train")
    return 0


def cmd_add(args) -> int:
    config = _load_config(args)
    impl_add(config, args.stage)
    print(f"indexed increment {args.stage}")
    return 0


def cmd_retrieve(args) -> int:
    for path in impl_retrieve(_load_config(args), args.stage):
        print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    path = impl_evaluate(_load_config(args))
    print(f"wrote {path}")
    print(path.read_text(encoding="utf-8"), end="")
    return 0


def cmd_run(args) -> int:
    path = impl_run(_load_config(args))
    print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    paths = write_benchmark(args.out_dir, n_docs=args.n_docs, seed=args.seed or 1234)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyngr",
        description="Generative retrieval over dynamic corpora")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON or TOML)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out-dir", default=None, help="override config out_dir")
        p.add_argument("--method", default=None, help="override config method")

    for name, func, extra in (
        ("partition", cmd_partition, ()),
        ("build", cmd_build, ()),
        ("train", cmd_train, ()),
        ("add", cmd_add, ("stage",)),
        ("retrieve", cmd_retrieve, ("stage",)),
        ("evaluate", cmd_evaluate, ()),
        ("run", cmd_run, ()),
    ):
        p = sub.add_parser(name)
        common(p)
        if "stage" in extra:
            p.add_argument("--stage", type=int, required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="generate the bundled synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-docs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ConfigError, CorpusError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
