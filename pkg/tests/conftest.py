"""Shared builders for hand-constructed traces."""
from pathlib import Path

import pytest

from dynasto.rl import load_policy
from dynasto.sim import RoadConfig, StepRecord, Trace, VehicleState

ROAD = RoadConfig()
DATA = Path(__file__).resolve().parents[1] / "src" / "dynasto" / "data"


def vehicle(x, y=0.0, vx=25.0, vy=0.0):
    lane = ROAD.lane_of(y)
    return VehicleState(x=float(x), y=float(y), vx=float(vx), vy=float(vy), heading=0.0,
                        lane_index=lane, target_lane=lane)


def make_trace(rows, collided=True, seed=0):
    """Build a trace from per-step tuples.

    Each row is ``(ego, adv)`` or ``(ego, adv, a_ego, a_adv)`` where ego/adv are
    ``(x, y[, vx[, vy]])`` tuples.
    """
    steps = []
    for t, row in enumerate(rows):
        ego, adv = row[0], row[1]
        a_ego, a_adv = (row[2], row[3]) if len(row) > 2 else (0.0, 0.0)
        steps.append(StepRecord(t=t, ego=vehicle(*ego), adv=vehicle(*adv), ego_action=1,
                                adv_action=1, a_ego=float(a_ego), a_adv=float(a_adv)))
    return Trace(steps=tuple(steps), collided=collided, T_c=len(steps) - 1 if collided else None,
                 seed=seed)


@pytest.fixture(scope="session")
def sut1():
    return load_policy(DATA / "sut1.json")
