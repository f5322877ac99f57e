"""Validity-aware adversarial reward and the matching search fitness."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .sim import StepRecord, Trace
from .validity import (INVALID, VALID, Classification, SafeDistanceParams, classify_failure,
                       current_distance, required_safe_distance)


@dataclass(frozen=True)
class RewardConfig:
    valid_bonus: float = 30.0
    invalid_divisor: float = 5.0
    T_max: int = 40

    def __post_init__(self):
        if not self.valid_bonus > 0 or not self.invalid_divisor > 0:
            raise ContractError("valid_bonus and invalid_divisor must be positive")


def collision_likelihood(d_c: float, d_safe: float) -> float:
    if not d_safe > 0:
        raise ContractError(f"d_safe must be positive, got {d_safe}")
    if d_c < d_safe:
        return (d_safe - d_c) / d_safe
    return 0.0


def step_shaping(record: StepRecord, p: SafeDistanceParams = SafeDistanceParams()) -> float:
    return collision_likelihood(current_distance(record.ego, record.adv),
                                required_safe_distance(record.ego, record.adv, p))


def terminal_bonus(cls: Classification, trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
                   rc: RewardConfig = RewardConfig()) -> float:
    """Bonus for a valid collision, penalty proportional to the violation for an invalid one.

    The penalty only counts a safe-distance shortfall at the maneuver onset; a rule
    matched while the gap was still sufficient yields 0 rather than a reward.
    """
    if cls.label == VALID:
        return rc.valid_bonus
    if cls.label == INVALID:
        if cls.t_m is None:
            raise ContractError("an Invalid classification must carry t_m")
        rec = trace.steps[cls.t_m]
        shortfall = (required_safe_distance(rec.ego, rec.adv, p)
                     - current_distance(rec.ego, rec.adv))
        return -max(shortfall, 0.0) / rc.invalid_divisor
    return 0.0


def shaping_sum(trace: Trace, p: SafeDistanceParams = SafeDistanceParams()) -> float:
    """Shaping accumulated over every policy step after the initial state."""
    return sum(step_shaping(r, p) for r in trace.steps[1:])


def reward_breakdown(trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
                     rc: RewardConfig = RewardConfig(), cls: Classification | None = None) -> dict:
    cls = cls if cls is not None else classify_failure(trace, p)
    shaping = shaping_sum(trace, p)
    terminal = terminal_bonus(cls, trace, p, rc)
    return {"shaping_sum": shaping, "terminal": terminal, "total": shaping + terminal}


def episode_reward(trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
                   rc: RewardConfig = RewardConfig(), cls: Classification | None = None) -> float:
    return reward_breakdown(trace, p, rc, cls)["total"]


def fitness(trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
            rc: RewardConfig = RewardConfig(), cls: Classification | None = None) -> float:
    return -episode_reward(trace, p, rc, cls)
