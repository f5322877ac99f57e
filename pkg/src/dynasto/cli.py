"""Command-line entry point: ``dynasto <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analytics import DEFAULT_K, DEFAULT_S_TH, cluster_failures, dedup_pool
from .archive import FailureArchive
from .errors import ConfigurationError, ContractError
from .harness import (METHODS, ExperimentConfig, assignments_csv, emit_report, load_results,
                      load_sut, pairwise_stats, run_pipeline, run_seed)
from .rl import evaluate_sut, save_policy, train_adversary, train_sut
from .search import ParamBounds, run_search
from .sim import Trace, read_jsonl
from .stats import compare
from .validity import classify_failure


def _config(args, **overrides) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.out:
        base["out_dir"] = args.out
    if args.seed is not None and "seeds" not in overrides:
        base["seeds"] = [args.seed]
    return ExperimentConfig.from_dict(base)


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_traces(path) -> list[Trace]:
    """A trace JSON file, or JSON lines of traces or failure records."""
    text = Path(path).read_text().strip()
    docs = [json.loads(text)] if text.startswith("{") and "\n" not in text else read_jsonl(path)
    return [Trace.from_dict(d["trace"] if "trace" in d else d) for d in docs]


def cmd_train_sut(args):
    policy = train_sut(args.env, args.budget, seed=args.seed or 0)
    stats = evaluate_sut(policy, args.env, 50, seed=123)
    path = _out(args) / f"{args.env.lower()}.json"
    save_policy(path, policy, {"env": args.env, "budget": args.budget, "seed": args.seed or 0, **stats})
    print(json.dumps({"checkpoint": str(path), **stats}))


def cmd_train_adversary(args):
    seed = args.seed or 0
    run = train_adversary(load_sut(args.sut), args.budget, seed=seed)
    out = _out(args)
    run.archive.save(out / "archive.jsonl")
    save_policy(out / "adversary.json", run.policy, {"sut": args.sut, "budget": args.budget, "seed": seed})
    print(json.dumps({"episodes": run.n_episodes, "collisions": run.n_collisions,
                      "valid": len(run.archive), "archive": str(out / "archive.jsonl")}))


def cmd_search_init(args):
    archive = FailureArchive.load(args.archive)
    bounds = ParamBounds.from_file(args.bounds, len(archive)) if args.bounds else None
    res = run_search(archive, load_sut(args.sut), args.budget, args.seed or 0, bounds, args.method,
                     pop_size=args.pop, unit=args.unit)
    out = _out(args)
    FailureArchive(res.failures).save(out / "search_failures.jsonl")
    print(json.dumps({"evaluations": res.n_evaluations, "steps": res.n_steps, "collisions": res.n_collisions,
                      "valid": len(res.failures)}))


def cmd_run_method(args):
    cfg = _config(args, method=args.method, sut=args.sut)
    results = [run_seed(cfg, s) for s in cfg.seeds]
    for r in results:
        d = r.to_dict()
        d.pop("curve")
        print(json.dumps(d))


def cmd_run_pipeline(args):
    seeds = list(range(args.seeds)) if args.seeds else None
    cfg = _config(args, method=args.method, sut=args.sut, seeds=seeds)
    results = run_pipeline(cfg, jobs=args.jobs)
    emit_report(load_results(cfg.out_dir), cfg.out_dir)
    for r in results:
        print(json.dumps({"method": r.method, "seed": r.seed, "valid": r.n_valid,
                          "unique": r.n_unique, "clusters": r.n_clusters}))


def cmd_classify(args):
    for i, trace in enumerate(_load_traces(args.trace)):
        print(json.dumps({"trace_id": i, **classify_failure(trace).to_dict()}))


def cmd_dedup(args):
    pool = FailureArchive.load(args.pool)
    unique = dedup_pool(pool, args.s_th)
    path = _out(args) / "unique.jsonl"
    FailureArchive(unique).save(path)
    print(json.dumps({"input": len(pool), "unique": len(unique), "s_th": args.s_th, "path": str(path)}))


def cmd_cluster(args):
    pool = list(FailureArchive.load(args.pool))
    if not pool:
        raise ContractError("cannot cluster an empty pool")
    res = cluster_failures(pool, args.k, args.seed or 0, args.resolution)
    out = _out(args)
    ids = list(range(len(pool)))
    (out / "clusters.json").write_text(json.dumps(res.report(ids), indent=2))
    (out / "assignments.csv").write_text(assignments_csv(res.partition.membership, ids))
    print(json.dumps({"clusters": res.partition.n_clusters, "modularity": res.partition.modularity}))


def _sample(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_stats(args):
    if args.results:
        rows = pairwise_stats(load_results(args.results), args.metric)
    elif args.a and args.b:
        rows = [compare("a", _sample(args.a), "b", _sample(args.b)).to_dict()]
    else:
        raise ConfigurationError("give --results or both --a and --b", "stats")
    print(json.dumps(rows, indent=2))


def cmd_report(args):
    results = load_results(args.results)
    if not results:
        raise ConfigurationError(f"no results under {args.results}", "results")
    paths = emit_report(results, args.out or args.results)
    print(json.dumps({k: str(v) for k, v in paths.items()}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynasto", description=__doc__)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train-sut", help="train an ego policy in IDM traffic")
    s.add_argument("--env", default="SUT1", choices=["SUT1", "SUT2"])
    s.add_argument("--budget", type=int, default=8000)
    s.set_defaults(func=cmd_train_sut)

    s = sub.add_parser("train-adversary", help="Step 1: train the RL adversary and archive valid failures")
    s.add_argument("--sut", default="SUT1", help="SUT1, SUT2 or a checkpoint path")
    s.add_argument("--budget", type=int, default=3000)
    s.set_defaults(func=cmd_train_adversary)

    s = sub.add_parser("search-init", help="Step 2: search initial conditions against an archive")
    s.add_argument("--archive", required=True)
    s.add_argument("--sut", default="SUT1")
    s.add_argument("--budget", type=int, default=1000)
    s.add_argument("--method", default="ga", choices=["ga", "rs"])
    s.add_argument("--pop", type=int, default=100, help="population size")
    s.add_argument("--bounds", help="JSON file of parameter ranges")
    s.add_argument("--unit", default="evaluations", choices=["evaluations", "steps"],
                   help="what one unit of --budget buys")
    s.set_defaults(func=cmd_search_init)

    s = sub.add_parser("run-method", help="run one method for the selected seed(s)")
    s.add_argument("--method", choices=METHODS, default=None)
    s.add_argument("--sut", default=None)
    s.set_defaults(func=cmd_run_method)

    s = sub.add_parser("run-pipeline", help="run all seeds of a method and write the report")
    s.add_argument("--method", choices=METHODS, default=None)
    s.add_argument("--sut", default=None)
    s.add_argument("--seeds", type=int, default=None, help="number of seeds (0..n-1)")
    s.set_defaults(func=cmd_run_pipeline)

    s = sub.add_parser("classify", help="label collision traces Valid/Invalid/NoCollision")
    s.add_argument("trace", help="trace JSON or JSON lines of traces/failure records")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("dedup", help="drop near-duplicate failures")
    s.add_argument("pool", help="JSON lines of failure records")
    s.add_argument("--s-th", type=float, default=DEFAULT_S_TH)
    s.set_defaults(func=cmd_dedup)

    s = sub.add_parser("cluster", help="cluster failures into failure modes")
    s.add_argument("pool", help="JSON lines of failure records")
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--resolution", type=float, default=1.0)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("stats", help="Mann-Whitney U and Cliff's delta")
    s.add_argument("--results", help="run directory with per-seed results")
    s.add_argument("--metric", default="n_unique")
    s.add_argument("--a", help="comma-separated sample")
    s.add_argument("--b", help="comma-separated sample")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("report", help="emit curves, summary and pairwise statistics")
    s.add_argument("--results", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigurationError, ContractError) as exc:
        print(f"dynasto: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
