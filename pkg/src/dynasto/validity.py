"""Offline rule monitor that labels collision traces as valid or invalid.

Rules are evaluated with Boolean semantics over ``[0, T_c]``. A collision is
invalid when the adversary initiated an unsafe maneuver: a cut-in or a
same-lane brake while closer than the required safe distance, or an
acceleration toward the rear of the ego. Every other collision is a valid
failure, i.e. attributable to the ego.

Temporal windows are anchored at the triggering instant: a cut-in is the
step at which the adversary's lane index changes (with the ego keeping its
lane) such that within ``dt_window`` steps the adversary is ahead of the ego
in the same lane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .sim import Trace, VehicleState

VALID = "Valid"
INVALID = "Invalid"
NO_COLLISION = "NoCollision"
RULES = ("unsafe-cut-in", "unsafe-brake", "rear-hit")


@dataclass(frozen=True)
class SafeDistanceParams:
    a_l: float = 5.0
    a_f: float = 5.0
    tau_r: float = 0.2
    d_min_lon: float = 5.0
    a_lat: float = 5.0
    b_lat: float = 5.0
    d_min_lat: float = 2.0
    delta_lat: float = 2.0
    a_min: float = 1.0
    dt_window: int = 2

    def __post_init__(self):
        for name in ("a_l", "a_f", "a_lat", "b_lat", "delta_lat", "a_min"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be strictly positive")
        for name in ("tau_r", "d_min_lon", "d_min_lat"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")
        if self.dt_window < 0:
            raise ContractError("dt_window must be non-negative")


@dataclass(frozen=True)
class Classification:
    label: str
    violated_rule: str | None = None
    t_m: int | None = None

    def __post_init__(self):
        if (self.label == INVALID) != (self.violated_rule is not None and self.t_m is not None):
            raise ContractError("violated_rule and t_m must be present iff the label is Invalid")

    def to_dict(self) -> dict:
        return {"label": self.label, "rule": self.violated_rule, "t_m": self.t_m}

    @classmethod
    def from_dict(cls, d: dict) -> "Classification":
        return cls(d["label"], d.get("rule"), d.get("t_m"))


def safe_lon_distance(v_l: float, v_f: float, p: SafeDistanceParams = SafeDistanceParams()) -> float:
    """Longitudinal gap the follower needs to stop behind a braking leader."""
    raw = 0.5 * (v_f * v_f / p.a_f - v_l * v_l / p.a_l) + v_f * p.tau_r + p.d_min_lon
    return max(raw, p.d_min_lon)


def safe_lat_distance(v_lat: float, p: SafeDistanceParams = SafeDistanceParams()) -> float:
    v = abs(v_lat)
    return (v * p.tau_r + 0.5 * p.a_lat * p.tau_r ** 2
            + (v + p.a_lat * p.tau_r) ** 2 / (2.0 * p.b_lat) + p.d_min_lat)


def current_distance(ego: VehicleState, adv: VehicleState) -> float:
    return math.hypot(ego.x - adv.x, ego.y - adv.y)


def same_lane(ego: VehicleState, adv: VehicleState, p: SafeDistanceParams = SafeDistanceParams()) -> bool:
    return abs(adv.y - ego.y) < p.delta_lat


def required_safe_distance(ego: VehicleState, adv: VehicleState,
                           p: SafeDistanceParams = SafeDistanceParams()) -> float:
    if same_lane(ego, adv, p):
        lead, follow = (adv, ego) if adv.x >= ego.x else (ego, adv)
        return safe_lon_distance(max(lead.vx, 0.0), max(follow.vx, 0.0), p)
    return safe_lat_distance(adv.vy, p)


@dataclass
class PredicateVector:
    """Per-step predicate signals of one trace (boolean numpy arrays)."""

    unsafe: np.ndarray
    ahead_adv: np.ndarray
    ahead_ego: np.ndarray
    lanec_adv: np.ndarray
    lanec_ego: np.ndarray
    same_lane: np.ndarray
    brake_adv: np.ndarray
    accel_adv: np.ndarray
    brake_ego: np.ndarray
    accel_ego: np.ndarray
    cutin_adv: np.ndarray
    d_c: np.ndarray
    d_safe: np.ndarray

    def __len__(self):
        return len(self.unsafe)

    def at(self, t: int) -> dict:
        return {name: (bool(v[t]) if v.dtype == bool else float(v[t]))
                for name, v in vars(self).items()}


def eventually_ahead(signal: np.ndarray, window: int) -> np.ndarray:
    """``out[t]`` is true iff ``signal`` holds somewhere in ``[t, t + window]``."""
    n = len(signal)
    out = np.zeros(n, dtype=bool)
    for k in range(window + 1):
        out[: n - k] |= signal[k:]
    return out


def evaluate_predicates(trace: Trace, p: SafeDistanceParams = SafeDistanceParams()) -> PredicateVector:
    steps = trace.steps
    if not steps:
        raise ContractError("cannot evaluate predicates on an empty trace")
    ex = np.array([r.ego.x for r in steps])
    ax = np.array([r.adv.x for r in steps])
    ey = np.array([r.ego.y for r in steps])
    ay = np.array([r.adv.y for r in steps])
    el = np.array([r.ego.lane_index for r in steps])
    al = np.array([r.adv.lane_index for r in steps])
    a_adv = np.array([r.a_adv for r in steps])
    a_ego = np.array([r.a_ego for r in steps])

    same = np.abs(ay - ey) < p.delta_lat
    ahead_adv = ax > ex
    ahead_ego = ex > ax
    adv_changed = np.zeros(len(steps), dtype=bool)
    ego_changed = np.zeros(len(steps), dtype=bool)
    adv_changed[1:] = al[1:] != al[:-1]
    ego_changed[1:] = el[1:] != el[:-1]
    lanec_adv = adv_changed & ~ego_changed
    lanec_ego = ego_changed & ~adv_changed

    d_c = np.hypot(ex - ax, ey - ay)
    d_safe = np.array([required_safe_distance(r.ego, r.adv, p) for r in steps])
    unsafe = d_c < d_safe

    cutin = lanec_adv & eventually_ahead(ahead_adv & same, p.dt_window)
    return PredicateVector(
        unsafe=unsafe, ahead_adv=ahead_adv, ahead_ego=ahead_ego, lanec_adv=lanec_adv,
        lanec_ego=lanec_ego, same_lane=same, brake_adv=a_adv <= -p.a_min,
        accel_adv=a_adv >= p.a_min, brake_ego=a_ego <= -p.a_min, accel_ego=a_ego >= p.a_min,
        cutin_adv=cutin, d_c=d_c, d_safe=d_safe,
    )


def rule_matches(trace: Trace, p: SafeDistanceParams = SafeDistanceParams(),
                 pred: PredicateVector | None = None) -> dict:
    """Earliest satisfying step of each rule over ``[0, T_c]`` (None if unsatisfied)."""
    pred = pred if pred is not None else evaluate_predicates(trace, p)
    signals = {
        "unsafe-cut-in": pred.cutin_adv & pred.unsafe,
        "unsafe-brake": pred.ahead_adv & pred.unsafe & pred.brake_adv & pred.same_lane,
        "rear-hit": pred.ahead_ego & pred.accel_adv & pred.same_lane,
    }
    out = {}
    for rule, sig in signals.items():
        hits = np.flatnonzero(sig)
        out[rule] = int(hits[0]) if hits.size else None
    return out


def classify_failure(trace: Trace, p: SafeDistanceParams = SafeDistanceParams()) -> Classification:
    if not trace.collided:
        return Classification(NO_COLLISION)
    matches = rule_matches(trace, p)
    for rule in RULES:
        if matches[rule] is not None:
            return Classification(INVALID, rule, matches[rule])
    return Classification(VALID)
