"""Experiment orchestration: methods, seeded runs, artifacts and reports."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from .analytics import DEFAULT_K, DEFAULT_S_TH, cluster_failures, dedup_pool, unique_curve
from .archive import FailureArchive
from .baselines import base_dqn_run, coevolve, ga_action_search, random_adversary_run
from .errors import ConfigurationError
from .rl import DQNConfig, GreedyPolicy, load_policy, train_adversary
from .search import BUDGET_UNITS, run_search
from .stats import compare

METHODS = ("rs", "ga-actions", "base-dqn", "varl", "varl-ga", "varl-rs", "dynasto-ga", "dynasto-rs")
TWO_STEP = ("dynasto-ga", "dynasto-rs")


@dataclass
class ExperimentConfig:
    method: str = "dynasto-ga"
    budget: int = 4000
    step1_budget: int = 3000
    step2_budget: int = 1000
    seeds: list = field(default_factory=lambda: list(range(10)))
    sut: str = "SUT1"
    out_dir: str = "runs"
    s_th: float = DEFAULT_S_TH
    k: int = DEFAULT_K
    resolution: float = 1.0
    pop_size: int = 100
    dqn: dict = field(default_factory=dict)
    step2_unit: str = "evaluations"  # or "steps"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}", "method")
        if self.step1_budget + self.step2_budget != self.budget:
            raise ConfigurationError("step1_budget + step2_budget must equal budget", "budget")
        if min(self.step1_budget, self.step2_budget) < 0:
            raise ConfigurationError("budgets must be non-negative", "budget")
        if self.step2_unit not in BUDGET_UNITS:
            raise ConfigurationError(f"step2_unit must be one of {BUDGET_UNITS}", "step2_unit")
        if len(self.seeds) < 1:
            raise ConfigurationError("at least one seed is required", "seeds")
        self.seeds = [int(s) for s in self.seeds]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}", sorted(unknown)[0])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def dqn_config(self) -> DQNConfig:
        d = dict(self.dqn)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return DQNConfig(**d)


@dataclass
class RunResult:
    method: str
    seed: int
    sut: str
    n_evaluations: int
    n_collisions: int
    n_valid: int
    n_unique: int
    n_clusters: int
    curve: list  # cumulative unique valid failures per budget position
    seconds: float = 0.0

    def __post_init__(self):
        if not self.n_unique <= self.n_valid <= self.n_collisions:
            raise ConfigurationError("counts must satisfy unique <= valid <= all collisions")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)

    def same_outcome(self, other: "RunResult") -> bool:
        a, b = self.to_dict(), other.to_dict()
        a.pop("seconds"), b.pop("seconds")
        return a == b


def load_sut(sut: str) -> GreedyPolicy:
    """Shipped checkpoint by id (``SUT1``/``SUT2``) or a checkpoint path."""
    if sut.upper() in ("SUT1", "SUT2"):
        ref = resources.files("dynasto") / "data" / f"{sut.lower()}.json"
        with resources.as_file(ref) as path:
            return load_policy(path)
    path = Path(sut)
    if not path.is_file():
        raise ConfigurationError(f"SUT checkpoint {sut!r} not found", "sut")
    return load_policy(path)


@dataclass
class MethodOutput:
    failures: list
    n_evaluations: int
    n_collisions: int
    step1_archive: FailureArchive | None = None


def run_method(method: str, sut_policy, seed: int, budget: int = 4000, step1_budget: int = 3000,
               pop_size: int = 100, dqn: DQNConfig | None = None,
               step2_unit: str = "evaluations") -> MethodOutput:
    """Run one test-generation method for exactly ``budget`` steps or evaluations."""
    dqn = dqn or DQNConfig()
    if method == "rs":
        run = random_adversary_run(sut_policy, budget, seed)
    elif method == "base-dqn":
        run = base_dqn_run(sut_policy, budget, seed, dqn)
    elif method == "varl":
        run = train_adversary(sut_policy, budget, dqn, seed, source="varl")
    elif method in ("varl-ga", "varl-rs"):
        run = coevolve(sut_policy, method[-2:], budget, seed, dqn, pop_size)
    elif method == "ga-actions":
        res = ga_action_search(sut_policy, budget, seed, pop_size=pop_size)
        return MethodOutput(res.failures, res.n_evaluations, res.n_collisions)
    elif method in TWO_STEP:
        step1 = train_adversary(sut_policy, step1_budget, dqn, seed)
        step2_budget = budget - step1_budget
        failures, n_eval, n_coll = list(step1.archive), step1.n_steps, step1.n_collisions
        if step2_budget > 0 and len(step1.archive):
            res = run_search(step1.archive, sut_policy, step2_budget, seed, method=method[-2:],
                             pop_size=pop_size, index_offset=step1.n_steps, unit=step2_unit)
            failures += res.failures
            n_eval += res.spent(step2_unit)
            n_coll += res.n_collisions
        else:
            # Without an archived behaviour Step 2 has nothing to replay; its budget goes unused.
            n_eval += step2_budget
        return MethodOutput(failures, n_eval, n_coll, step1.archive)
    else:
        raise ConfigurationError(f"unknown method {method!r}", "method")
    return MethodOutput(list(run.archive), run.n_steps, run.n_collisions, run.archive)


def summarize(method: str, seed: int, sut: str, out: MethodOutput, budget: int,
              s_th: float = DEFAULT_S_TH, k: int = DEFAULT_K, resolution: float = 1.0,
              seconds: float = 0.0):
    """De-duplicate and cluster a method's failures; returns (RunResult, unique pool, clusters)."""
    failures = sorted(out.failures, key=lambda r: r.index)
    unique = dedup_pool(failures, s_th)
    curve = unique_curve(failures, budget, s_th) if budget else np.zeros(0, int)
    clusters = cluster_failures(unique, k, seed, resolution) if unique else None
    result = RunResult(method=method, seed=seed, sut=sut, n_evaluations=out.n_evaluations,
                       n_collisions=out.n_collisions, n_valid=len(failures), n_unique=len(unique),
                       n_clusters=clusters.partition.n_clusters if clusters else 0,
                       curve=[int(c) for c in curve], seconds=seconds)
    return result, unique, clusters


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _jsonl(records) -> str:
    return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in records)


def assignments_csv(membership, ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "failure_id", "cluster"])
    for node, (fid, c) in enumerate(zip(ids, membership)):
        w.writerow([node, fid, c])
    return buf.getvalue()


def run_seed(cfg: ExperimentConfig, seed: int, sut_policy=None) -> RunResult:
    """One seeded run of ``cfg.method``; artifacts land in ``<out>/<method>/seed_<seed>``."""
    sut_policy = sut_policy if sut_policy is not None else load_sut(cfg.sut)
    t0 = time.perf_counter()
    out = run_method(cfg.method, sut_policy, seed, cfg.budget, cfg.step1_budget, cfg.pop_size,
                     cfg.dqn_config(), cfg.step2_unit)
    result, unique, clusters = summarize(cfg.method, seed, cfg.sut, out, cfg.budget, cfg.s_th,
                                         cfg.k, cfg.resolution)
    result.seconds = time.perf_counter() - t0
    run_dir = Path(cfg.out_dir) / cfg.method / f"seed_{seed}"
    if out.step1_archive is not None:
        _write_atomic(run_dir / "archive.jsonl", _jsonl(out.step1_archive))
    _write_atomic(run_dir / "failures.jsonl", _jsonl(sorted(out.failures, key=lambda r: r.index)))
    _write_atomic(run_dir / "unique.jsonl", _jsonl(unique))
    if clusters is not None:
        ids = list(range(len(unique)))
        _write_atomic(run_dir / "clusters.json", json.dumps(clusters.report(ids), indent=2))
        _write_atomic(run_dir / "assignments.csv", assignments_csv(clusters.partition.membership, ids))
    _write_atomic(run_dir / "result.json", json.dumps(result.to_dict()))
    return result


def _run_seed_job(args) -> RunResult:
    cfg_dict, seed = args
    return run_seed(ExperimentConfig.from_dict(cfg_dict), seed)


def manifest(cfg: ExperimentConfig) -> dict:
    versions = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "leidenalg", "rapidfuzz", "scikit-learn"):
        try:
            versions[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            versions[pkg] = None
    try:
        versions["dynasto"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        versions["dynasto"] = None
    return {"versions": versions, "config_hash": cfg.config_hash(), "seeds": cfg.seeds,
            "config": cfg.to_dict()}


def run_pipeline(cfg: ExperimentConfig, jobs: int = 1, sut_policy=None) -> list[RunResult]:
    """All seeds of one method; seeds run in parallel processes when ``jobs > 1``."""
    if sut_policy is None:
        load_sut(cfg.sut)  # fail fast on a missing checkpoint
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / cfg.method / "manifest.json", json.dumps(manifest(cfg), indent=2))
    if jobs > 1 and sut_policy is None:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_seed_job, [(cfg.to_dict(), s) for s in cfg.seeds]))
    return [run_seed(cfg, s, sut_policy) for s in cfg.seeds]


def load_results(out_dir) -> list[RunResult]:
    paths = sorted(Path(out_dir).glob("*/seed_*/result.json"))
    return [RunResult.from_dict(json.loads(p.read_text())) for p in paths]


# --- reporting --------------------------------------------------------------------------

def _by_method(results) -> dict:
    groups: dict = {}
    for r in results:
        groups.setdefault(r.method, []).append(r)
    return {m: sorted(rs, key=lambda r: r.seed) for m, rs in groups.items()}


def summary(results) -> dict:
    """Per-method median and interquartile range of each count."""
    out = {}
    for method, rs in _by_method(results).items():
        entry = {"seeds": [r.seed for r in rs]}
        for key in ("n_collisions", "n_valid", "n_unique", "n_clusters"):
            vals = np.array([getattr(r, key) for r in rs], float)
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            entry[key] = {"median": float(med), "q1": float(q1), "q3": float(q3),
                          "iqr": float(q3 - q1), "mean": float(vals.mean())}
        out[method] = entry
    return out


def pairwise_stats(results, key: str = "n_unique") -> list[dict]:
    groups = _by_method(results)
    rows = []
    for a, b in itertools.combinations(sorted(groups), 2):
        st = compare(a, [getattr(r, key) for r in groups[a]], b, [getattr(r, key) for r in groups[b]])
        rows.append(dict(st.to_dict(), metric=key))
    return rows


def curves_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "evaluation", "unique_valid"])
    for r in sorted(results, key=lambda r: (r.method, r.seed)):
        for i, c in enumerate(r.curve):
            w.writerow([r.method, r.seed, i + 1, c])
    return buf.getvalue()


def emit_report(results, out_dir, key: str = "n_unique") -> dict:
    """Write curves.csv, summary.json and stats.json; returns their paths."""
    out = Path(out_dir)
    paths = {"curves": out / "curves.csv", "summary": out / "summary.json", "stats": out / "stats.json"}
    _write_atomic(paths["curves"], curves_csv(results))
    _write_atomic(paths["summary"], json.dumps(summary(results), indent=2))
    _write_atomic(paths["stats"], json.dumps(pairwise_stats(results, key), indent=2))
    return paths
