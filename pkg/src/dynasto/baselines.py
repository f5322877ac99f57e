"""Reference test generators: random adversary, open-loop GA, base reward, co-evolution."""
from __future__ import annotations

import numpy as np

from .archive import FailureRecord
from .errors import ConfigurationError, ProtocolError
from .reward import RewardConfig, episode_reward, shaping_sum
from .rl import DQNAgent, DQNConfig, RandomActor, run_adversary, sample_step1_config
from .search import GeneticSearch, ParamBounds, ParamSpec, RandomSearch, SearchResult, decode
from .sim import N_ACTIONS, T_MAX, Policy, ReplayPolicy, ScenarioConfig, Trace, reset, run_episode
from .validity import VALID, Classification, SafeDistanceParams, classify_failure


def random_adversary(seed: int = 0) -> Policy:
    """Uniform meta-actions, independent of the observation."""
    rng = np.random.default_rng(seed)
    return lambda obs: int(rng.integers(N_ACTIONS))


def random_actor(seed: int = 0) -> RandomActor:
    return RandomActor(seed)


def base_reward(trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
                rc: RewardConfig = RewardConfig()) -> float:
    """Validity-agnostic reward: same shaping, bonus for every collision."""
    return shaping_sum(trace, p) + (rc.valid_bonus if trace.collided else 0.0)


# --- GA over fixed action sequences -----------------------------------------------------

def action_bounds(length: int = T_MAX) -> ParamBounds:
    return ParamBounds([ParamSpec(f"a{i}", 0.0, 1.0) for i in range(length)])


def decode_actions(x) -> list[int]:
    """Equal-width binning of [0, 1] into the five meta-actions."""
    x = np.asarray(x, float)
    return [int(a) for a in np.clip(np.floor(x * N_ACTIONS), 0, N_ACTIONS - 1)]


def ga_action_search(sut_policy: Policy, budget: int = 4000, seed: int = 0,
                     config: ScenarioConfig | None = None, pop_size: int = 100, d_th: float = 0.05,
                     safe_params: SafeDistanceParams = SafeDistanceParams(),
                     reward_config: RewardConfig = RewardConfig(), t_max: int = T_MAX) -> SearchResult:
    """Evolve one open-loop adversary action sequence per candidate for ``budget`` evaluations."""
    config = config or sample_step1_config(np.random.default_rng([seed, 5]))
    opt = GeneticSearch(action_bounds(t_max), pop_size=pop_size, d_th=d_th, seed=seed)
    seeds = np.random.default_rng([seed, 13])
    result = SearchResult()
    while result.n_evaluations < budget:
        fits = []
        for x in opt.ask(budget - result.n_evaluations):
            ep_seed = int(seeds.integers(2 ** 31))
            trace = run_episode(reset(config, seed=ep_seed), sut_policy,
                                ReplayPolicy(decode_actions(x)), t_max)
            cls = classify_failure(trace, safe_params)
            fits.append(-episode_reward(trace, safe_params, reward_config, cls))
            if cls.label == VALID:
                result.failures.append(FailureRecord(
                    config=config, adv_actions=trace.adv_actions, trace=trace, classification=cls,
                    seed=ep_seed, source="ga-actions", genotype=[float(v) for v in x],
                    index=result.n_evaluations))
            result.n_collisions += int(trace.collided)
            result.labels.append(cls.label)
            result.n_evaluations += 1
        opt.tell(fits)
    result.best_history = list(opt.history)
    return result


# --- co-evolution of the RL adversary with an initial-condition search -------------------

class SearchConfigSource:
    """Feeds each RL training episode an initial condition proposed by an ask/tell optimizer.

    One candidate is asked per episode and told back the episode's fitness, so a
    GA generation advances once ``pop_size`` episodes have finished.
    """

    def __init__(self, optimizer, bounds: ParamBounds,
                 safe_params: SafeDistanceParams = SafeDistanceParams(),
                 reward_config: RewardConfig = RewardConfig()):
        if bounds.has_failure_id:
            raise ConfigurationError("co-evolution searches initial conditions only", "bounds")
        self.opt = optimizer
        self.bounds = bounds
        self.safe_params = safe_params
        self.reward_config = reward_config
        self.proposed = []

    def propose(self, rng=None) -> ScenarioConfig:
        x = self.opt.ask(1)
        self.proposed.append(x[0])
        return decode(x[0], self.bounds)[0]

    def feedback(self, config: ScenarioConfig, trace: Trace, cls: Classification) -> None:
        if self.opt.outstanding is None:
            raise ProtocolError("feedback() without a pending proposal")
        self.opt.tell([-episode_reward(trace, self.safe_params, self.reward_config, cls)])


def coevolve(sut_policy: Policy, mode: str = "GA", budget: int = 4000, seed: int = 0,
             hyperparams: DQNConfig | None = None, pop_size: int = 100,
             bounds: ParamBounds | None = None, **kwargs):
    """Train an RL adversary whose episode initial conditions come from GA or random search."""
    bounds = bounds or ParamBounds.default()
    mode = mode.upper()
    if mode == "GA":
        opt = GeneticSearch(bounds, pop_size=pop_size, seed=seed)
    elif mode == "RS":
        opt = RandomSearch(bounds, batch_size=pop_size, seed=seed)
    else:
        raise ConfigurationError(f"unknown co-evolution mode {mode!r}", "mode")
    source = SearchConfigSource(opt, bounds)
    agent = DQNAgent(hyperparams or DQNConfig(), budget, seed)
    return run_adversary(agent, sut_policy, budget, seed, config_source=source,
                         source=f"varl-{mode.lower()}", **kwargs)


def random_adversary_run(sut_policy: Policy, budget: int = 4000, seed: int = 0, **kwargs):
    """Uniform random adversary from Step-1 initial conditions for ``budget`` env steps."""
    return run_adversary(RandomActor(seed), sut_policy, budget, seed, source="rs", **kwargs)


def base_dqn_run(sut_policy: Policy, budget: int = 4000, seed: int = 0,
                 hyperparams: DQNConfig | None = None, **kwargs):
    """RL adversary trained with the validity-agnostic reward."""
    agent = DQNAgent(hyperparams or DQNConfig(), budget, seed)
    return run_adversary(agent, sut_policy, budget, seed, reward_mode="base",
                         source="base-dqn", **kwargs)
