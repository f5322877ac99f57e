"""Genetic search over static initial conditions.

Candidates live in the unit hypercube; each component is de-normalized
against its parameter range (and rounded for integer parameters) before a
rollout. The optimizer speaks an ask/tell protocol so that evaluation, which
needs the simulator and the ego policy, stays outside of it.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .archive import FailureArchive, FailureRecord
from .errors import ConfigurationError, ContractError, ProtocolError
from .reward import RewardConfig, fitness
from .sim import T_MAX, Policy, ReplayPolicy, ScenarioConfig, reset, run_episode
from .validity import VALID, SafeDistanceParams, classify_failure

FAILURE_ID = "failure_id"

# Initial-condition ranges; the adversary's x range is listed with min > max
# and is canonicalized on load.
SEARCH_RANGES = {
    "x_ego": (247.0, 304.0),
    "x_adv": (395.0, 364.0),
    "l_ego": (0, 1),
    "l_adv": (0, 1),
    "tl_ego": (0, 1),
    "tl_adv": (0, 1),
    "h_ego": (-0.08, 0.08),
    "h_adv": (-0.08, 0.08),
    "s_ego": (20.0, 29.0),
    "s_adv": (20.0, 29.0),
}
INTEGER_PARAMS = {"l_ego", "l_adv", "tl_ego", "tl_adv", FAILURE_ID}


@dataclass(frozen=True)
class ParamSpec:
    name: str
    low: float
    high: float
    integer: bool = False


class ParamBounds:
    """Ordered box bounds of the searched parameters."""

    def __init__(self, specs):
        canon = []
        for s in specs:
            low, high = s.low, s.high
            if low > high:
                warnings.warn(f"bounds of {s.name} given as ({low}, {high}); using ({high}, {low})")
                low, high = high, low
            if s.integer and (low != math.floor(low) or high != math.floor(high)):
                raise ConfigurationError(f"integer parameter {s.name} needs integral bounds", s.name)
            canon.append(ParamSpec(s.name, float(low), float(high), s.integer))
        self.specs = tuple(canon)
        self.names = tuple(s.name for s in canon)
        self.low = np.array([s.low for s in canon])
        self.high = np.array([s.high for s in canon])
        self.integer = np.array([s.integer for s in canon])

    @property
    def dim(self) -> int:
        return len(self.specs)

    @property
    def has_failure_id(self) -> bool:
        return FAILURE_ID in self.names

    @classmethod
    def from_dict(cls, ranges: dict, archive_size: int | None = None) -> "ParamBounds":
        specs = [ParamSpec(name, lo, hi, name in INTEGER_PARAMS) for name, (lo, hi) in ranges.items()]
        if archive_size is not None and FAILURE_ID not in ranges:
            specs.append(ParamSpec(FAILURE_ID, 0, max(archive_size - 1, 0), True))
        return cls(specs)

    @classmethod
    def default(cls, archive_size: int | None = None) -> "ParamBounds":
        """Default search ranges; with ``archive_size`` the failure-id gene is appended (d=11)."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls.from_dict(SEARCH_RANGES, archive_size)

    @classmethod
    def from_file(cls, path, archive_size: int | None = None) -> "ParamBounds":
        return cls.from_dict({k: tuple(v) for k, v in json.loads(Path(path).read_text()).items()},
                             archive_size)

    def to_dict(self) -> dict:
        return {s.name: [s.low, s.high] for s in self.specs}

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform per-parameter draw, returned normalized."""
        out = np.empty(self.dim)
        for i, s in enumerate(self.specs):
            if s.integer:
                p = float(rng.integers(int(s.low), int(s.high) + 1))
            else:
                p = float(rng.uniform(s.low, s.high))
            out[i] = 0.0 if s.high == s.low else (p - s.low) / (s.high - s.low)
        return out


def denormalize(x: np.ndarray, bounds: ParamBounds) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (bounds.dim,):
        raise ContractError(f"genotype has shape {x.shape}, expected ({bounds.dim},)")
    p = bounds.low + x * (bounds.high - bounds.low)
    rounded = np.clip(np.floor(p + 0.5), bounds.low, bounds.high)
    return np.where(bounds.integer, rounded, p)


def decode(x, bounds: ParamBounds):
    """Genotype -> (ScenarioConfig, failure_id or None)."""
    p = dict(zip(bounds.names, denormalize(x, bounds)))
    failure_id = int(p.pop(FAILURE_ID)) if FAILURE_ID in p else None
    kwargs = {}
    for name, value in p.items():
        kwargs[name] = int(value) if name in INTEGER_PARAMS else float(value)
    return ScenarioConfig(**kwargs), failure_id


def encode(config: ScenarioConfig, failure_id: int | None, bounds: ParamBounds) -> np.ndarray:
    x = np.empty(bounds.dim)
    for i, s in enumerate(bounds.specs):
        p = failure_id if s.name == FAILURE_ID else getattr(config, s.name)
        if p is None or not s.low <= p <= s.high:
            raise ContractError(f"{s.name}={p} lies outside [{s.low}, {s.high}]")
        x[i] = 0.0 if s.high == s.low else (p - s.low) / (s.high - s.low)
    return x


# --- variation operators ----------------------------------------------------------------

def sbx_crossover(p1, p2, eta_c: float = 15.0, rng: np.random.Generator | None = None,
                  prob_var: float = 0.5):
    """Bounded simulated binary crossover on [0, 1]^d genotypes."""
    if eta_c <= 0:
        raise ContractError("eta_c must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    c1, c2 = p1.copy(), p2.copy()
    d = p1.size
    cross = rng.random(d) < prob_var
    u = rng.random(d)
    swap = rng.random(d) < 0.5
    for i in range(d):
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        if not cross[i] or y2 - y1 < 1e-14:
            continue
        span = y2 - y1
        exp = 1.0 / (eta_c + 1.0)
        beta = 1.0 + 2.0 * y1 / span
        alpha = 2.0 - beta ** -(eta_c + 1.0)
        betaq = ((u[i] * alpha) ** exp if u[i] <= 1.0 / alpha
                 else (1.0 / (2.0 - u[i] * alpha)) ** exp)
        low_child = 0.5 * (y1 + y2 - betaq * span)
        beta = 1.0 + 2.0 * (1.0 - y2) / span
        alpha = 2.0 - beta ** -(eta_c + 1.0)
        betaq = ((u[i] * alpha) ** exp if u[i] <= 1.0 / alpha
                 else (1.0 / (2.0 - u[i] * alpha)) ** exp)
        high_child = 0.5 * (y1 + y2 + betaq * span)
        if swap[i]:
            low_child, high_child = high_child, low_child
        c1[i], c2[i] = low_child, high_child
    return np.clip(c1, 0.0, 1.0), np.clip(c2, 0.0, 1.0)


def polynomial_mutation(x, eta_m: float = 20.0, rate: float | None = None,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Bounded polynomial mutation; ``rate`` is the per-component probability."""
    rng = rng if rng is not None else np.random.default_rng()
    x = np.asarray(x, dtype=float).copy()
    rate = 1.0 / x.size if rate is None else rate
    if not 0.0 <= rate <= 1.0:
        raise ContractError("mutation rate must lie in [0, 1]")
    mask = rng.random(x.size) < rate
    u = rng.random(x.size)
    power = 1.0 / (eta_m + 1.0)
    for i in np.flatnonzero(mask):
        xi = x[i]
        if u[i] <= 0.5:
            val = 2.0 * u[i] + (1.0 - 2.0 * u[i]) * (1.0 - xi) ** (eta_m + 1.0)
            dq = val ** power - 1.0
        else:
            val = 2.0 * (1.0 - u[i]) + 2.0 * (u[i] - 0.5) * xi ** (eta_m + 1.0)
            dq = 1.0 - val ** power
        x[i] = min(max(xi + dq, 0.0), 1.0)
    return x


def remove_duplicates(pop, d_th: float = 0.05, existing=None) -> np.ndarray:
    """Greedy first-seen filter; drops rows closer than ``d_th`` to a kept row."""
    pop = np.atleast_2d(np.asarray(pop, dtype=float))
    kept = [] if existing is None else list(np.atleast_2d(np.asarray(existing, dtype=float)))
    out = []
    for row in pop:
        if kept and np.min(np.linalg.norm(np.asarray(kept) - row, axis=1)) < d_th:
            continue
        kept.append(row)
        out.append(row)
    return np.asarray(out).reshape(-1, pop.shape[1])


# --- ask/tell optimizers ----------------------------------------------------------------

class _AskTell:
    def __init__(self, dim: int):
        self.dim = dim
        self.pending = np.empty((0, dim))
        self.outstanding = None
        self.n_told = 0
        self.generation = 0
        self.best_fitness = math.inf
        self.best_x = None
        self.history = []  # best population fitness after each generation

    def _new_batch(self) -> np.ndarray:
        raise NotImplementedError

    def _on_batch_complete(self, X, F) -> None:
        pass

    def ask(self, n: int | None = None) -> np.ndarray:
        if self.outstanding is not None:
            raise ProtocolError("ask() called while the previous batch is still untold")
        if not len(self.pending):
            self.pending = self._new_batch()
            self._batch_X = self.pending.copy()
            self._batch_F = []
        take = len(self.pending) if n is None else min(n, len(self.pending))
        batch, self.pending = self.pending[:take], self.pending[take:]
        self.outstanding = batch
        return batch.copy()

    def tell(self, fitnesses) -> None:
        if self.outstanding is None:
            raise ProtocolError("tell() without a preceding ask()")
        f = np.asarray(fitnesses, dtype=float).ravel()
        if f.size != len(self.outstanding):
            raise ProtocolError(f"tell() got {f.size} fitnesses for {len(self.outstanding)} candidates")
        for x, fi in zip(self.outstanding, f):
            if fi < self.best_fitness:
                self.best_fitness, self.best_x = float(fi), x.copy()
        self._batch_F.extend(f.tolist())
        self.n_told += f.size
        self.outstanding = None
        if not len(self.pending):
            self._on_batch_complete(self._batch_X, np.asarray(self._batch_F))
            self.generation += 1


class GeneticSearch(_AskTell):
    """Elitist GA: binary tournaments, SBX and PM.

    ``survival="generational"`` replaces the population with its offspring and
    carries the best parent over the worst child; ``"plus"`` keeps the best
    ``pop_size`` of parents and offspring together.
    """

    def __init__(self, bounds: ParamBounds, pop_size: int = 100, pc: float = 0.9, pm: float = 0.9,
                 eta_c: float = 15.0, eta_m: float = 20.0, d_th: float = 0.05, seed: int = 0,
                 survival: str = "generational"):
        if survival not in ("generational", "plus"):
            raise ConfigurationError(f"unknown survival {survival!r}", "survival")
        super().__init__(bounds.dim)
        self.survival = survival
        self.bounds = bounds
        self.pop_size = pop_size
        self.pc, self.pm = pc, pm
        self.eta_c, self.eta_m = eta_c, eta_m
        self.d_th = d_th
        self.rng = np.random.default_rng(seed)
        self.X = None
        self.F = None

    def _sample(self, n, existing=None) -> np.ndarray:
        ref = [] if existing is None else list(existing)
        rows = []
        for _ in range(50 * n):
            if len(rows) >= n:
                break
            x = self.bounds.sample(self.rng)
            if not ref or np.min(np.linalg.norm(np.asarray(ref) - x, axis=1)) >= self.d_th:
                ref.append(x)
                rows.append(x)
        return np.asarray(rows).reshape(-1, self.dim)

    def _tournament(self) -> np.ndarray:
        i, j = self.rng.integers(len(self.X), size=2)
        return self.X[i] if self.F[i] <= self.F[j] else self.X[j]

    def _offspring(self) -> np.ndarray:
        kids = np.empty((0, self.dim))
        for _ in range(20):
            need = self.pop_size - len(kids)
            if need <= 0:
                break
            fresh = []
            while len(fresh) < need:
                a, b = self._tournament(), self._tournament()
                if self.rng.random() < self.pc:
                    a, b = sbx_crossover(a, b, self.eta_c, self.rng)
                for c in (a, b):
                    if self.rng.random() < self.pm:
                        c = polynomial_mutation(c, self.eta_m, None, self.rng)
                    fresh.append(c)
            ref = np.vstack([self.X, kids])
            kids = np.vstack([kids, remove_duplicates(fresh, self.d_th, ref)])[: self.pop_size]
        if len(kids) < self.pop_size:
            kids = np.vstack([kids, self._sample(self.pop_size - len(kids), np.vstack([self.X, kids]))])
        return kids

    def _new_batch(self) -> np.ndarray:
        if self.X is None:
            return self._sample(self.pop_size)
        return self._offspring()

    def _on_batch_complete(self, X, F) -> None:
        X, F = np.array(X, float), np.array(F, float)
        if self.X is not None and self.survival == "plus":
            X = np.vstack([self.X, X])
            F = np.concatenate([self.F, F])
        elif self.X is not None:
            elite, worst = int(np.argmin(self.F)), int(np.argmax(F))
            if self.F[elite] < F[worst]:
                X[worst], F[worst] = self.X[elite], self.F[elite]
        order = np.argsort(F, kind="stable")[: self.pop_size]
        self.X, self.F = X[order], F[order]
        self.history.append(float(self.F[0]))


class RandomSearch(_AskTell):
    """Uniform per-parameter sampling behind the same ask/tell protocol."""

    def __init__(self, bounds: ParamBounds, batch_size: int = 100, seed: int = 0):
        super().__init__(bounds.dim)
        self.bounds = bounds
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def _new_batch(self) -> np.ndarray:
        return np.asarray([self.bounds.sample(self.rng) for _ in range(self.batch_size)])

    def _on_batch_complete(self, X, F) -> None:
        self.history.append(float(F.min()))


def ga_ask(state: _AskTell, n: int | None = None) -> np.ndarray:
    return state.ask(n)


def ga_tell(state: _AskTell, fitnesses) -> _AskTell:
    state.tell(fitnesses)
    return state


# --- evaluation against recorded adversary behaviour -----------------------------------

def evaluate_candidate(genotype, archive: FailureArchive, sut_policy: Policy, bounds: ParamBounds,
                       seed: int = 0, safe_params: SafeDistanceParams = SafeDistanceParams(),
                       reward_config: RewardConfig = RewardConfig(), t_max: int = T_MAX,
                       pool: list | None = None):
    """Roll out a decoded initial condition while replaying an archived adversary.

    Returns ``(fitness, trace, classification)``; valid failures are appended to
    ``pool`` when one is given.
    """
    if archive is None or len(archive) == 0:
        raise ConfigurationError("evaluate_candidate needs a non-empty failure archive", "archive")
    config, failure_id = decode(genotype, bounds)
    failure_id = 0 if failure_id is None else min(max(failure_id, 0), len(archive) - 1)
    session = reset(config, seed=seed)
    trace = run_episode(session, sut_policy, ReplayPolicy(archive[failure_id].adv_actions), t_max)
    cls = classify_failure(trace, safe_params)
    fit = fitness(trace, safe_params, reward_config, cls)
    if pool is not None and cls.label == VALID:
        pool.append(FailureRecord(config=config, adv_actions=trace.adv_actions, trace=trace,
                                  classification=cls, seed=seed, source="step2",
                                  genotype=list(map(float, genotype))))
    return fit, trace, cls


@dataclass
class SearchResult:
    failures: list = field(default_factory=list)
    n_evaluations: int = 0
    n_collisions: int = 0
    best_history: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    n_steps: int = 0  # simulator steps across all evaluations

    def spent(self, unit: str) -> int:
        return self.n_steps if unit == "steps" else self.n_evaluations


BUDGET_UNITS = ("evaluations", "steps")


def run_search(archive: FailureArchive, sut_policy: Policy, budget: int = 1000, seed: int = 0,
               bounds: ParamBounds | None = None, method: str = "ga", pop_size: int = 100,
               d_th: float = 0.05, safe_params: SafeDistanceParams = SafeDistanceParams(),
               reward_config: RewardConfig = RewardConfig(), index_offset: int = 0,
               unit: str = "evaluations", survival: str = "generational") -> SearchResult:
    """Spend exactly ``budget`` units and return the new valid failures.

    With ``unit="evaluations"`` each candidate rollout costs one unit. With
    ``unit="steps"`` each simulator step costs one, and the last rollout is cut
    short so the total lands on ``budget``. Record indices are budget positions.
    """
    if unit not in BUDGET_UNITS:
        raise ConfigurationError(f"unknown budget unit {unit!r}", "unit")
    result = SearchResult()
    if budget <= 0:
        return result
    bounds = bounds or ParamBounds.default(archive_size=len(archive))
    if method == "ga":
        opt = GeneticSearch(bounds, pop_size=pop_size, d_th=d_th, seed=seed, survival=survival)
    elif method == "rs":
        opt = RandomSearch(bounds, batch_size=pop_size, seed=seed)
    else:
        raise ConfigurationError(f"unknown search method {method!r}", "method")
    seeds = np.random.default_rng([seed, 11])
    while result.spent(unit) < budget:
        X = opt.ask(budget - result.n_evaluations if unit == "evaluations" else 1)
        fits = []
        for x in X:
            pool = []
            t_max = T_MAX if unit == "evaluations" else min(T_MAX, budget - result.n_steps)
            fit, trace, cls = evaluate_candidate(x, archive, sut_policy, bounds,
                                                 int(seeds.integers(2 ** 31)), safe_params,
                                                 reward_config, t_max, pool=pool)
            result.n_steps += trace.length
            result.n_evaluations += 1
            for rec in pool:
                rec.index = index_offset + result.spent(unit) - 1
            result.failures.extend(pool)
            result.n_collisions += int(trace.collided)
            result.labels.append(cls.label)
            fits.append(fit)
        opt.tell(fits)
    result.best_history = list(opt.history)
    return result
