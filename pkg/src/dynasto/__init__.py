"""Two-step adversarial test generation for automated-driving policies.

Step 1 trains a reinforcement-learning adversary against a fixed ego policy
and archives the collisions an offline rule monitor deems valid. Step 2
searches initial conditions with a genetic algorithm while replaying the
archived adversary behaviour. Failures are then de-duplicated and clustered
into failure modes.
"""
from .analytics import (adjusted_rand_index, cluster_failures, dedup_pool, descriptive_vector,
                        extract_events, is_duplicate, knn_graph, leiden_cluster, levenshtein,
                        modularity)
from .archive import FailureArchive, FailureRecord, replay
from .errors import (ConfigurationError, ContractError, ProtocolError, SimulationStateError,
                     TrainingError)
from .reward import RewardConfig, collision_likelihood, episode_reward, fitness, terminal_bonus
from .rl import DQNConfig, load_policy, save_policy, train_adversary, train_sut
from .search import GeneticSearch, ParamBounds, RandomSearch, decode, encode, run_search
from .sim import MetaAction, ScenarioConfig, Trace, reset, run_episode
from .stats import cliffs_delta, mann_whitney_u
from .validity import (INVALID, NO_COLLISION, VALID, Classification, SafeDistanceParams,
                       classify_failure, safe_lat_distance, safe_lon_distance)

__all__ = [
    "adjusted_rand_index", "cluster_failures", "dedup_pool", "descriptive_vector", "extract_events",
    "is_duplicate", "knn_graph", "leiden_cluster", "levenshtein", "modularity",
    "FailureArchive", "FailureRecord", "replay",
    "ConfigurationError", "ContractError", "ProtocolError", "SimulationStateError", "TrainingError",
    "RewardConfig", "collision_likelihood", "episode_reward", "fitness", "terminal_bonus",
    "DQNConfig", "load_policy", "save_policy", "train_adversary", "train_sut",
    "GeneticSearch", "ParamBounds", "RandomSearch", "decode", "encode", "run_search",
    "MetaAction", "ScenarioConfig", "Trace", "reset", "run_episode",
    "cliffs_delta", "mann_whitney_u",
    "INVALID", "NO_COLLISION", "VALID", "Classification", "SafeDistanceParams",
    "classify_failure", "safe_lat_distance", "safe_lon_distance",
]
