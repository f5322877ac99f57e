"""Two-dimensional highway simulation with discrete meta-actions.

Vehicles follow a point-mass kinematic model: a proportional speed tracker
drives the longitudinal motion and a proportional lateral controller steers
toward the centerline of the target lane. One policy period is integrated
with a fixed number of Euler substeps; collisions are checked after every
substep with a separating-axis test on oriented rectangles.

Lane 0 is the leftmost lane and sits at ``y = 0``; lane ``i`` is centred at
``y = i * lane_width``. ``LANE_RIGHT`` therefore increases the lane index.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import IntEnum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, SimulationStateError

POLICY_PERIOD = 1.0  # s
SUBSTEPS = 5
SPEED_STEP = 2.5  # m/s per FASTER/SLOWER
SPEED_MIN = 15.0
SPEED_MAX = 30.0
ACC_MAX = 5.0  # m/s^2, saturation of the speed tracker
SPEED_GAIN = 1.0 / 0.6  # 1/s
LATERAL_GAIN = 2.0  # 1/s
LATERAL_SPEED_MAX = 3.0  # m/s
HEADING_RESPONSE = 0.5  # fraction of heading error removed per substep
T_MAX = 40

# Observation scales; positions of the adversary are taken relative to the ego.
OBS_SCALES = {
    "x_ego_offset": 250.0,
    "x_ego": 1000.0,
    "y": 4.0,
    "vx": 30.0,
    "vy": 5.0,
    "dx": 100.0,
    "dy": 4.0,
}


class MetaAction(IntEnum):
    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    FASTER = 3
    SLOWER = 4


N_ACTIONS = len(MetaAction)


@dataclass(frozen=True)
class RoadConfig:
    lane_count: int = 2
    lane_width: float = 4.0
    road_length: float = 10_000.0

    def __post_init__(self):
        if self.lane_count < 2:
            raise ConfigurationError("lane_count must be at least 2", "lane_count")
        if not self.lane_width > 0:
            raise ConfigurationError("lane_width must be positive", "lane_width")

    def lane_center(self, lane: int) -> float:
        return lane * self.lane_width

    def lane_of(self, y: float) -> int:
        lane = int(math.floor(y / self.lane_width + 0.5))
        return min(max(lane, 0), self.lane_count - 1)


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    lane_index: int
    target_lane: int
    length: float = 5.0
    width: float = 2.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "vx": self.vx, "vy": self.vy,
                "heading": self.heading, "lane": self.lane_index}

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleState":
        return cls(x=d["x"], y=d["y"], vx=d["vx"], vy=d["vy"], heading=d["heading"],
                   lane_index=d["lane"], target_lane=d["lane"])


@dataclass(frozen=True)
class ScenarioConfig:
    """Static initial conditions of the ego and the adversary."""

    x_ego: float
    x_adv: float
    l_ego: int
    l_adv: int
    tl_ego: int
    tl_adv: int
    h_ego: float = 0.0
    h_adv: float = 0.0
    s_ego: float = 25.0
    s_adv: float = 25.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


SCENARIO_FIELDS = tuple(f.name for f in fields(ScenarioConfig))
LANE_FIELDS = ("l_ego", "l_adv", "tl_ego", "tl_adv")


@dataclass(frozen=True, slots=True)
class StepRecord:
    t: int
    ego: VehicleState
    adv: VehicleState
    ego_action: int
    adv_action: int
    a_ego: float
    a_adv: float

    def to_dict(self) -> dict:
        return {"t": self.t, "ego": self.ego.to_dict(), "adv": self.adv.to_dict(),
                "ego_action": int(self.ego_action), "adv_action": int(self.adv_action),
                "a_ego": self.a_ego, "a_adv": self.a_adv}

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(t=d["t"], ego=VehicleState.from_dict(d["ego"]),
                   adv=VehicleState.from_dict(d["adv"]), ego_action=d["ego_action"],
                   adv_action=d["adv_action"], a_ego=d["a_ego"], a_adv=d["a_adv"])


@dataclass(frozen=True)
class Trace:
    """Time-ordered records of one episode.

    ``steps[0]`` is the initial state (its actions are IDLE placeholders);
    ``steps[t]`` is the state reached after the ``t``-th policy period.
    """

    steps: tuple
    collided: bool
    T_c: int | None
    seed: int
    config: ScenarioConfig | None = None

    def __post_init__(self):
        if self.collided != (self.T_c is not None):
            raise ContractError("collided must hold exactly when T_c is present")
        if self.collided and self.steps[-1].t != self.T_c:
            raise ContractError("a collided trace must end at T_c")

    @property
    def length(self) -> int:
        """Number of policy periods simulated."""
        return self.steps[-1].t

    @property
    def adv_actions(self) -> list[int]:
        return [int(r.adv_action) for r in self.steps[1:]]

    @property
    def ego_actions(self) -> list[int]:
        return [int(r.ego_action) for r in self.steps[1:]]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config.to_dict() if self.config is not None else None,
            "steps": [r.to_dict() for r in self.steps],
            "collided": self.collided,
            "T_c": self.T_c,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Trace":
        config = ScenarioConfig.from_dict(d["config"]) if d.get("config") else None
        return cls(steps=tuple(StepRecord.from_dict(s) for s in d["steps"]),
                   collided=d["collided"], T_c=d["T_c"], seed=d["seed"], config=config)

    @classmethod
    def loads(cls, s: str) -> "Trace":
        return cls.from_dict(json.loads(s))


def append_jsonl(path, objects: Iterable[dict]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class _Vehicle:
    """Mutable dynamic state of one simulated vehicle."""

    __slots__ = ("x", "y", "speed", "heading", "target_lane", "target_speed",
                 "length", "width")

    def __init__(self, x, y, speed, heading, target_lane, length=5.0, width=2.0):
        self.x = float(x)
        self.y = float(y)
        self.speed = float(speed)
        self.heading = float(heading)
        self.target_lane = int(target_lane)
        self.target_speed = float(speed)
        self.length = length
        self.width = width

    def apply(self, action: int, road: RoadConfig) -> None:
        if action == MetaAction.FASTER:
            self.target_speed = min(self.target_speed + SPEED_STEP, SPEED_MAX)
        elif action == MetaAction.SLOWER:
            self.target_speed = max(self.target_speed - SPEED_STEP, SPEED_MIN)
        elif action == MetaAction.LANE_LEFT:
            if self.target_lane > 0:
                self.target_lane -= 1
        elif action == MetaAction.LANE_RIGHT:
            if self.target_lane < road.lane_count - 1:
                self.target_lane += 1

    def substep(self, dt: float, road: RoadConfig, accel: float | None = None) -> None:
        if accel is None:
            accel = SPEED_GAIN * (self.target_speed - self.speed)
            accel = min(max(accel, -ACC_MAX), ACC_MAX)
        err = road.lane_center(self.target_lane) - self.y
        vy_cmd = min(max(LATERAL_GAIN * err, -LATERAL_SPEED_MAX), LATERAL_SPEED_MAX)
        ratio = vy_cmd / self.speed if self.speed > 1e-6 else 0.0
        heading_cmd = math.asin(min(max(ratio, -0.5), 0.5))
        self.heading += HEADING_RESPONSE * (heading_cmd - self.heading)
        self.x += self.speed * math.cos(self.heading) * dt
        self.y += self.speed * math.sin(self.heading) * dt
        self.speed = max(self.speed + accel * dt, 0.0)

    def snapshot(self, road: RoadConfig) -> VehicleState:
        return VehicleState(
            x=self.x, y=self.y,
            vx=self.speed * math.cos(self.heading),
            vy=self.speed * math.sin(self.heading),
            heading=self.heading, lane_index=road.lane_of(self.y),
            target_lane=self.target_lane, length=self.length, width=self.width,
        )


def _corners(x, y, heading, length, width):
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    return [(x + c * dl - s * dw, y + s * dl + c * dw)
            for dl, dw in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))]


def _rect_overlap(ax, ay, ah, al, aw, bx, by, bh, bl, bw) -> bool:
    reach = (math.hypot(al, aw) + math.hypot(bl, bw)) / 2.0
    if (ax - bx) ** 2 + (ay - by) ** 2 >= reach * reach:
        return False
    ca = _corners(ax, ay, ah, al, aw)
    cb = _corners(bx, by, bh, bl, bw)
    for h in (ah, bh):
        for ux, uy in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            pa = [px * ux + py * uy for px, py in ca]
            pb = [px * ux + py * uy for px, py in cb]
            if max(pa) <= min(pb) or max(pb) <= min(pa):
                return False
    return True


def collision_check(a: VehicleState, b: VehicleState) -> bool:
    """True iff the two oriented rectangles overlap (touching is not overlap)."""
    return _rect_overlap(a.x, a.y, a.heading, a.length, a.width,
                         b.x, b.y, b.heading, b.length, b.width)


def _collides(a: _Vehicle, b: _Vehicle) -> bool:
    return _rect_overlap(a.x, a.y, a.heading, a.length, a.width,
                         b.x, b.y, b.heading, b.length, b.width)


def observe(ego: VehicleState, adv: VehicleState) -> np.ndarray:
    """Fixed-scale 8-dimensional observation shared by ego and adversary."""
    s = OBS_SCALES
    return np.array([
        (ego.x - s["x_ego_offset"]) / s["x_ego"],
        ego.y / s["y"],
        ego.vx / s["vx"],
        ego.vy / s["vy"],
        min(max((adv.x - ego.x) / s["dx"], -1.0), 1.0),
        (adv.y - ego.y) / s["dy"],
        adv.vx / s["vx"],
        adv.vy / s["vy"],
    ])


def validate_config(config: ScenarioConfig, road: RoadConfig) -> None:
    for name in SCENARIO_FIELDS:
        value = getattr(config, name)
        if not math.isfinite(value):
            raise ConfigurationError(f"{name} is not finite", name)
    for name in LANE_FIELDS:
        value = getattr(config, name)
        if int(value) != value or not 0 <= value < road.lane_count:
            raise ConfigurationError(
                f"{name}={value} is not a lane of a {road.lane_count}-lane road", name)
    for name in ("s_ego", "s_adv"):
        if getattr(config, name) < 0:
            raise ConfigurationError(f"{name} must be non-negative", name)
    for name in ("h_ego", "h_adv"):
        if abs(getattr(config, name)) >= math.pi / 2:
            raise ConfigurationError(f"{name} must lie within (-pi/2, pi/2)", name)
    for name in ("x_ego", "x_adv"):
        if not 0 <= getattr(config, name) <= road.road_length:
            raise ConfigurationError(f"{name} lies outside the road", name)


class SimulatorSession:
    """One ego/adversary episode. Single-threaded; not shareable."""

    def __init__(self, config: ScenarioConfig, road: RoadConfig | None = None, seed: int = 0):
        self.road = road or RoadConfig()
        validate_config(config, self.road)
        self.config = config
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        lw = self.road.lane_width
        self._ego = _Vehicle(config.x_ego, config.l_ego * lw, config.s_ego, config.h_ego,
                             config.tl_ego)
        self._adv = _Vehicle(config.x_adv, config.l_adv * lw, config.s_adv, config.h_adv,
                             config.tl_adv)
        self.t = 0
        self.collided = False
        self.records = [StepRecord(0, self._ego.snapshot(self.road), self._adv.snapshot(self.road),
                                   int(MetaAction.IDLE), int(MetaAction.IDLE), 0.0, 0.0)]

    @property
    def terminated(self) -> bool:
        return self.collided

    @property
    def last(self) -> StepRecord:
        return self.records[-1]

    def observation(self) -> np.ndarray:
        r = self.records[-1]
        return observe(r.ego, r.adv)

    def step(self, ego_action: int, adv_action: int) -> StepRecord:
        if self.collided:
            raise SimulationStateError("step() called on a terminated session")
        ego, adv, road = self._ego, self._adv, self.road
        ego.apply(ego_action, road)
        adv.apply(adv_action, road)
        v0_ego, v0_adv = ego.speed, adv.speed
        dt = POLICY_PERIOD / SUBSTEPS
        elapsed = 0.0
        for _ in range(SUBSTEPS):
            ego.substep(dt, road)
            adv.substep(dt, road)
            elapsed += dt
            if _collides(ego, adv):
                self.collided = True
                break
        self.t += 1
        rec = StepRecord(self.t, ego.snapshot(road), adv.snapshot(road), int(ego_action),
                         int(adv_action), (ego.speed - v0_ego) / elapsed,
                         (adv.speed - v0_adv) / elapsed)
        self.records.append(rec)
        return rec

    def trace(self) -> Trace:
        return Trace(steps=tuple(self.records), collided=self.collided,
                     T_c=self.t if self.collided else None, seed=self.seed, config=self.config)


def reset(config: ScenarioConfig, road: RoadConfig | None = None, seed: int = 0) -> SimulatorSession:
    return SimulatorSession(config, road, seed)


Policy = Callable[[np.ndarray], int]


def _checked(action) -> int:
    try:
        code = int(action)
    except (TypeError, ValueError):
        raise ContractError(f"policy returned a non-integer action {action!r}") from None
    if code != action or not 0 <= code < N_ACTIONS:
        raise ContractError(f"policy returned invalid action code {action!r}")
    return code


def run_episode(session: SimulatorSession, ego_policy: Policy, adv_policy: Policy,
                t_max: int = T_MAX) -> Trace:
    while not session.terminated and session.t < t_max:
        obs = session.observation()
        session.step(_checked(ego_policy(obs)), _checked(adv_policy(obs)))
    return session.trace()


class ReplayPolicy:
    """Plays back a recorded action sequence, then IDLE."""

    def __init__(self, actions: Sequence[int]):
        self.actions = [int(a) for a in actions]
        self.i = 0

    def __call__(self, obs) -> int:
        a = self.actions[self.i] if self.i < len(self.actions) else int(MetaAction.IDLE)
        self.i += 1
        return a


def constant_policy(action: int) -> Policy:
    return lambda obs: int(action)


# --- Intelligent Driver Model background traffic -------------------------------------

@dataclass(frozen=True)
class IDMParams:
    desired_speed: float = 25.0
    time_headway: float = 1.5
    min_gap: float = 5.0
    max_accel: float = 3.0
    comfort_decel: float = 5.0
    delta: float = 4.0


DEFENSIVE_IDM = IDMParams(desired_speed=22.0, time_headway=2.5, min_gap=8.0,
                          max_accel=1.5, comfort_decel=3.0)


def idm_acceleration(follower: VehicleState, leader: VehicleState | None,
                     params: IDMParams = IDMParams()) -> float:
    v = follower.vx
    if v < 0:
        raise ContractError("IDM follower speed must be non-negative")
    acc = params.max_accel * (1.0 - (v / params.desired_speed) ** params.delta)
    if leader is not None:
        gap = max(leader.x - follower.x - (leader.length + follower.length) / 2.0, 1e-3)
        dv = v - leader.vx
        s_star = params.min_gap + max(
            0.0, v * params.time_headway + v * dv / (2.0 * math.sqrt(params.max_accel * params.comfort_decel)))
        acc -= params.max_accel * (s_star / gap) ** 2
    return acc


@dataclass
class TrafficConfig:
    """Environment used to train an ego policy against IDM traffic."""

    n_vehicles: int = 1
    idm: IDMParams = field(default_factory=IDMParams)
    speed_range: tuple = (20.0, 30.0)
    w_speed: float = 0.4
    w_right: float = 0.1
    w_collision: float = 1.0
    t_max: int = T_MAX


SUT_ENVIRONMENTS = {
    "SUT1": TrafficConfig(n_vehicles=1, idm=IDMParams()),
    "SUT2": TrafficConfig(n_vehicles=4, idm=DEFENSIVE_IDM),
}


def sut_reward(speed: float, lane: int, collided: bool, road: RoadConfig, cfg: TrafficConfig) -> float:
    v_min, v_max = cfg.speed_range
    speed_term = min(max((speed - v_min) / (v_max - v_min), 0.0), 1.0)
    right = 1.0 if lane == road.lane_count - 1 else 0.0
    return cfg.w_speed * speed_term + cfg.w_right * right - cfg.w_collision * float(collided)


class TrafficEnv:
    """Ego vehicle among IDM-controlled vehicles that keep their lanes."""

    IDM_DECEL_LIMIT = 8.0

    def __init__(self, cfg: TrafficConfig, road: RoadConfig | None = None, seed: int = 0):
        self.cfg = cfg
        self.road = road or RoadConfig()
        self.rng = np.random.default_rng(seed)
        self.ego = None
        self.others: list[_Vehicle] = []
        self.t = 0
        self.collided = False

    def reset(self) -> np.ndarray:
        rng, road = self.rng, self.road
        lw = road.lane_width
        self.ego = _Vehicle(250.0, int(rng.integers(road.lane_count)) * lw, 25.0, 0.0, 0)
        self.ego.target_lane = road.lane_of(self.ego.y)
        self.others = []
        slots = []
        while len(self.others) < self.cfg.n_vehicles:
            lane = int(rng.integers(road.lane_count))
            x = 250.0 + float(rng.uniform(-40.0, 100.0))
            if abs(x - 250.0) < 12.0 and lane == self.ego.target_lane:
                continue
            if any(lane == sl and abs(x - sx) < 15.0 for sl, sx in slots):
                continue
            slots.append((lane, x))
            v = _Vehicle(x, lane * lw, float(rng.uniform(18.0, 26.0)), 0.0, lane)
            self.others.append(v)
        self.t = 0
        self.collided = False
        return self.observation()

    def _nearest(self) -> _Vehicle:
        return min(self.others, key=lambda o: (o.x - self.ego.x) ** 2 + (o.y - self.ego.y) ** 2)

    def observation(self) -> np.ndarray:
        return observe(self.ego.snapshot(self.road), self._nearest().snapshot(self.road))

    def _leader(self, v: _Vehicle):
        lane = self.road.lane_of(v.y)
        best = None
        for o in [self.ego, *self.others]:
            if o is v or self.road.lane_of(o.y) != lane or o.x <= v.x:
                continue
            if best is None or o.x < best.x:
                best = o
        return best

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.collided:
            raise SimulationStateError("step() called on a terminated environment")
        road = self.road
        self.ego.apply(int(action), road)
        dt = POLICY_PERIOD / SUBSTEPS
        for _ in range(SUBSTEPS):
            accels = []
            for o in self.others:
                lead = self._leader(o)
                acc = idm_acceleration(o.snapshot(road), lead.snapshot(road) if lead else None,
                                       self.cfg.idm)
                accels.append(max(acc, -self.IDM_DECEL_LIMIT))
            self.ego.substep(dt, road)
            for o, acc in zip(self.others, accels):
                o.substep(dt, road, accel=acc)
            if any(_collides(self.ego, o) for o in self.others):
                self.collided = True
                break
        self.t += 1
        snap = self.ego.snapshot(road)
        reward = sut_reward(snap.vx, snap.lane_index, self.collided, road, self.cfg)
        return self.observation(), reward, self.collided
