"""Deep Q-learning in numpy: network, replay memory, and the training loops.

The same machinery trains the adversary (against a fixed ego policy) and
the ego policies themselves (against IDM traffic).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .archive import FailureArchive, FailureRecord
from .errors import TrainingError
from .reward import RewardConfig, step_shaping, terminal_bonus
from .sim import (N_ACTIONS, OBS_SCALES, SUT_ENVIRONMENTS, T_MAX, Policy, RoadConfig, ScenarioConfig,
                  TrafficConfig, TrafficEnv, reset)
from .validity import VALID, SafeDistanceParams, classify_failure

OBS_DIM = 8


class QNetwork:
    """Feed-forward action-value network with tanh hidden layers."""

    def __init__(self, n_in: int = OBS_DIM, n_out: int = N_ACTIONS, hidden=(64, 64), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = [n_in, *hidden, n_out]
        self.params = {}
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / math.sqrt(a)
            self.params[f"W{i}"] = rng.uniform(-bound, bound, size=(a, b))
            self.params[f"b{i}"] = rng.uniform(-bound, bound, size=b)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "QNetwork":
        clone = object.__new__(QNetwork)
        clone.sizes = list(self.sizes)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def load_state(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            self.params[k][...] = v

    def forward(self, x: np.ndarray, keep: bool = False):
        h = np.atleast_2d(x)
        acts = [h]
        last = self.n_layers - 1
        for i in range(self.n_layers):
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    __call__ = forward

    def backward(self, acts: list, d_out: np.ndarray) -> dict:
        grads = {}
        delta = d_out
        for i in reversed(range(self.n_layers)):
            grads[f"W{i}"] = acts[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[f"W{i}"].T) * (1.0 - acts[i] ** 2)
        return grads

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values())


class Adam:
    def __init__(self, params: dict, lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring store; the oldest transition is evicted first."""

    def __init__(self, capacity: int = 150_000, obs_dim: int = OBS_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = rng.choice(self.size, size=min(batch_size, self.size), replace=False)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx],
                     self.dones[idx])


def epsilon_at(step: int, total: int, eps_start: float = 1.0, eps_end: float = 0.05,
               frac: float = 0.2) -> float:
    duration = frac * total
    if duration <= 0 or step >= duration:
        return eps_end
    return eps_start + (eps_end - eps_start) * step / duration


def select_action(q: QNetwork, obs, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q(obs)[0]))


def td_loss_and_grads(q: QNetwork, target_q: QNetwork, batch: Batch, gamma: float = 0.95):
    next_max = target_q(batch.next_obs).max(axis=1)
    y = batch.rewards + gamma * next_max * (1.0 - batch.dones)
    out, acts = q.forward(batch.obs, keep=True)
    rows = np.arange(len(batch.actions))
    err = out[rows, batch.actions] - y
    loss = float(np.mean(err ** 2))
    d_out = np.zeros_like(out)
    d_out[rows, batch.actions] = 2.0 * err / len(err)
    return loss, q.backward(acts, d_out)


def td_update(q: QNetwork, target_q: QNetwork, batch: Batch, optimizer: Adam,
              gamma: float = 0.95) -> float:
    """One gradient step on the mean squared TD error; returns the pre-step loss."""
    loss, grads = td_loss_and_grads(q, target_q, batch, gamma)
    if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
        raise TrainingError("non-finite TD loss", diagnostics={
            "loss": loss,
            "reward_range": (float(batch.rewards.min()), float(batch.rewards.max())),
            "obs_abs_max": float(np.abs(batch.obs).max()),
            "param_abs_max": {k: float(np.abs(v).max()) for k, v in q.params.items()},
        })
    optimizer.step(q.params, grads)
    return loss


@dataclass
class DQNConfig:
    lr: float = 5e-4
    gamma: float = 0.95
    batch_size: int = 64
    buffer_size: int = 150_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    exploration_fraction: float = 0.2
    learning_starts: int = 500
    train_frequency: int = 1
    target_sync: int = 500
    hidden: tuple = (64, 64)


class DQNAgent:
    def __init__(self, cfg: DQNConfig, total_steps: int, seed: int = 0):
        self.cfg = cfg
        self.total_steps = total_steps
        self.rng = np.random.default_rng(seed)
        self.q = QNetwork(hidden=cfg.hidden, rng=self.rng)
        self.target_q = self.q.copy()
        self.optimizer = Adam(self.q.params, lr=cfg.lr)
        self.buffer = ReplayBuffer(min(cfg.buffer_size, max(total_steps, 1)))
        self.step = 0
        self.losses = []

    def act(self, obs) -> int:
        cfg = self.cfg
        eps = epsilon_at(self.step, self.total_steps, cfg.eps_start, cfg.eps_end,
                         cfg.exploration_fraction)
        return select_action(self.q, obs, eps, self.rng)

    def observe(self, obs, action, reward, next_obs, done) -> None:
        cfg = self.cfg
        self.buffer.add(obs, action, reward, next_obs, done)
        self.step += 1
        if self.step > cfg.learning_starts and self.step % cfg.train_frequency == 0:
            batch = self.buffer.sample(cfg.batch_size, self.rng)
            self.losses.append(td_update(self.q, self.target_q, batch, self.optimizer, cfg.gamma))
        if self.step % cfg.target_sync == 0:
            self.target_q.load_state(self.q)

    def policy(self) -> "GreedyPolicy":
        return GreedyPolicy(self.q.copy())


class RandomActor:
    """Observation-independent uniform adversary; learns nothing."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, obs) -> int:
        return int(self.rng.integers(N_ACTIONS))

    def observe(self, *args) -> None:
        pass


class GreedyPolicy:
    """Immutable argmax policy over a snapshot of network parameters."""

    def __init__(self, q: QNetwork):
        self.q = q
        self._layers = [(q.params[f"W{i}"], q.params[f"b{i}"]) for i in range(q.n_layers)]

    def __call__(self, obs) -> int:
        h = obs
        last = len(self._layers) - 1
        for i, (w, b) in enumerate(self._layers):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
        return int(np.argmax(h))


def save_policy(path, policy: GreedyPolicy, metadata: dict | None = None) -> None:
    q = policy.q
    doc = {
        "kind": "qnetwork",
        "activation": "tanh",
        "sizes": q.sizes,
        "obs_scales": OBS_SCALES,
        "parameters": [{"name": k, "shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in q.params.items()],
        "metadata": metadata or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))


def load_policy(path) -> GreedyPolicy:
    doc = json.loads(Path(path).read_text())
    q = object.__new__(QNetwork)
    q.sizes = list(doc["sizes"])
    q.params = {p["name"]: np.array(p["data"], dtype=float).reshape(p["shape"])
                for p in doc["parameters"]}
    return GreedyPolicy(q)


# --- adversary training -----------------------------------------------------------------

STEP1_X_EGO = (247.0, 263.0)
STEP1_X_ADV = (295.0, 327.0)


def sample_step1_config(rng: np.random.Generator, lane_count: int = 2) -> ScenarioConfig:
    l_ego = int(rng.integers(lane_count))
    l_adv = int(rng.integers(lane_count))
    return ScenarioConfig(
        x_ego=float(rng.uniform(*STEP1_X_EGO)), x_adv=float(rng.uniform(*STEP1_X_ADV)),
        l_ego=l_ego, l_adv=l_adv, tl_ego=l_ego, tl_adv=l_adv,
        h_ego=0.0, h_adv=0.0, s_ego=25.0, s_adv=25.0,
    )


@dataclass
class AdversaryRun:
    policy: Callable
    archive: FailureArchive
    agent: object
    n_steps: int = 0
    n_episodes: int = 0
    n_collisions: int = 0
    episode_log: list = field(default_factory=list)


def run_adversary(actor, sut_policy: Policy, budget: int, seed: int = 0,
                  reward_mode: str = "valid", config_source=None,
                  safe_params: SafeDistanceParams = SafeDistanceParams(),
                  reward_config: RewardConfig = RewardConfig(), t_max: int = T_MAX,
                  road: RoadConfig | None = None, source: str = "step1") -> AdversaryRun:
    """Run an online adversary for exactly ``budget`` environment steps.

    ``reward_mode`` is ``"valid"`` (terminal bonus only for valid collisions)
    or ``"base"`` (the bonus for any collision). ``config_source`` supplies the
    initial conditions of every episode; it defaults to the Step-1 sampler.
    Objects with ``propose(rng)``/``feedback(config, trace, cls)`` methods act
    as co-evolving search components.
    """
    cfg_rng = np.random.default_rng([seed, 7])
    archive = FailureArchive()
    run = AdversaryRun(policy=None, archive=archive, agent=actor)
    steps = 0
    while steps < budget:
        config = (config_source.propose(cfg_rng) if config_source is not None
                  else sample_step1_config(cfg_rng))
        ep_seed = int(cfg_rng.integers(2 ** 31))
        session = reset(config, road, seed=ep_seed)
        obs = session.observation()
        while not session.terminated and session.t < t_max and steps < budget:
            a = actor.act(obs)
            rec = session.step(sut_policy(obs), a)
            next_obs = session.observation()
            r = step_shaping(rec, safe_params)
            if session.collided:
                cls = classify_failure(session.trace(), safe_params)
                if reward_mode == "base":
                    r += reward_config.valid_bonus
                else:
                    r += terminal_bonus(cls, session.trace(), safe_params, reward_config)
            actor.observe(obs, a, r, next_obs, session.collided)
            obs = next_obs
            steps += 1
        trace = session.trace()
        cls = classify_failure(trace, safe_params)
        run.n_episodes += 1
        run.n_collisions += int(trace.collided)
        run.episode_log.append({"end_step": steps, "collided": trace.collided, "label": cls.label})
        if config_source is not None:
            config_source.feedback(config, trace, cls)
        if cls.label == VALID:
            archive.append(FailureRecord(config=config, adv_actions=trace.adv_actions, trace=trace,
                                         classification=cls, seed=ep_seed, source=source,
                                         index=steps - 1))
    run.n_steps = steps
    if hasattr(actor, "policy"):
        run.policy = actor.policy()
    return run


def train_adversary(sut_policy: Policy, budget: int = 3000, hyperparams: DQNConfig | None = None,
                    seed: int = 0, **kwargs) -> AdversaryRun:
    agent = DQNAgent(hyperparams or DQNConfig(), budget, seed)
    return run_adversary(agent, sut_policy, budget, seed, **kwargs)


# --- ego (SUT) training -----------------------------------------------------------------

def train_sut(env_cfg: TrafficConfig | str = "SUT1", budget: int = 8000,
              hyperparams: DQNConfig | None = None, seed: int = 0) -> GreedyPolicy:
    if isinstance(env_cfg, str):
        env_cfg = SUT_ENVIRONMENTS[env_cfg]
    env = TrafficEnv(env_cfg, seed=seed)
    agent = DQNAgent(hyperparams or DQNConfig(), budget, seed)
    obs = env.reset()
    for _ in range(budget):
        a = agent.act(obs)
        next_obs, r, done = env.step(a)
        agent.observe(obs, a, r, next_obs, done)
        obs = env.reset() if done or env.t >= env_cfg.t_max else next_obs
    return agent.policy()


def evaluate_sut(policy: Policy, env_cfg: TrafficConfig | str = "SUT1", episodes: int = 50,
                 seed: int = 0) -> dict:
    """Mean speed and collision count of an ego policy in IDM traffic."""
    if isinstance(env_cfg, str):
        env_cfg = SUT_ENVIRONMENTS[env_cfg]
    env = TrafficEnv(env_cfg, seed=seed)
    speeds, collisions = [], 0
    for _ in range(episodes):
        obs = env.reset()
        done = False
        while not done and env.t < env_cfg.t_max:
            obs, _, done = env.step(policy(obs))
            speeds.append(env.ego.speed)
        collisions += int(done)
    return {"mean_speed": float(np.mean(speeds)), "collisions": collisions}


def dqn_metadata(cfg: DQNConfig, **extra) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d.update(extra)
    return d
