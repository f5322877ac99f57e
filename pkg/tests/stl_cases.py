"""Hand-built traces with their intended classification.

Geometry reminders: lane 0 at y=0, lane 1 at y=4, same lane iff |dy| < 2.
Both at 25 m/s the longitudinal safe distance is 10 m; a 25 m/s follower
behind a 20 m/s leader needs 32.5 m; behind a 15 m/s leader it needs 50 m.
"""
from conftest import make_trace

from dynasto.validity import INVALID, NO_COLLISION, VALID

EPS = 1e-6


def cut_in(gap, adv_speed=15.0, dy=1.5):
    """Adversary moves from lane 1 into the ego lane at step 2 with ``gap`` metres of headway."""
    return make_trace([
        ((0, 0), (gap + 20, 4, adv_speed)),
        ((25, 0), (gap + 40, 4, adv_speed)),
        ((50, 0), (50 + gap, dy, adv_speed)),
        ((75, 0), (75 + gap / 2, 0, adv_speed)),
        ((100, 0), (104, 0, adv_speed)),
    ])


def brake(gap, a_adv=-3.0):
    """Same-lane leader at 20 m/s brakes once at step 1 with ``gap`` metres of headway."""
    return make_trace([
        ((0, 0, 25), (gap + 10, 0, 20), 0, 0),
        ((25, 0, 25), (25 + gap, 0, 20), 0, a_adv),
        ((50, 0, 25), (62, 0, 20), 0, 0),
        ((75, 0, 25), (79, 0, 20), 0, 0),
    ])


def rear_hit(a_adv):
    return make_trace([
        ((100, 0), (70, 0), 0, 0),
        ((125, 0), (115, 0), 0, a_adv),
        ((150, 0), (146, 0), 0, a_adv),
    ])


def cut_out_then_ego_merges():
    """Adversary leaves the ego lane; the ego then changes lane into it."""
    return make_trace([
        ((0, 0), (15, 0)),
        ((25, 0), (40, 2.5)),
        ((50, 0), (60, 4)),
        ((75, 2.5), (78, 4)),
    ])


def simultaneous_lane_change():
    """Both vehicles leave lane 1 for lane 0 at the same step, 8 m apart."""
    return make_trace([
        ((0, 4), (8, 4)),
        ((25, 4), (33, 4)),
        ((50, 1.5), (58, 1.5)),
        ((75, 0), (79, 0)),
    ])


def ego_side_swipe():
    """Ego steers into an adversary driving alongside in the other lane."""
    return make_trace([
        ((0, 0), (2, 4)),
        ((25, 0), (27, 4)),
        ((50, 2.2), (52, 4)),
    ])


def cut_in_then_brake():
    """Unsafe cut-in at step 2 followed by an unsafe brake at step 3."""
    return make_trace([
        ((0, 0), (25, 4, 25), 0, 0),
        ((25, 0), (50, 4, 25), 0, 0),
        ((50, 0), (57, 1.5, 25), 0, 0),
        ((75, 0), (81, 0, 20), 0, -5),
        ((100, 0), (104, 0, 15), 0, -5),
    ])


def repeated_rear_hit():
    return make_trace([
        ((100, 0), (60, 0), 0, 0),
        ((125, 0), (95, 0), 0, 0),
        ((150, 0), (130, 0), 0, 3),
        ((175, 0), (165, 0), 0, 3),
        ((200, 0), (196, 0), 0, 3),
    ])


def no_collision():
    return make_trace([((0, 0), (100, 0)), ((25, 0), (125, 0)), ((50, 0), (150, 0))],
                      collided=False)


# (name, trace factory, label, rule, t_m)
CASES = [
    ("safe cut-in", lambda: cut_in(60.0), VALID, None, None),
    ("unsafe cut-in", lambda: cut_in(20.0), INVALID, "unsafe-cut-in", 2),
    ("cut-in at d_safe + eps", lambda: cut_in(10.0 + EPS, adv_speed=25.0, dy=0.0), VALID, None, None),
    ("cut-in at d_safe - eps", lambda: cut_in(10.0 - EPS, adv_speed=25.0, dy=0.0), INVALID,
     "unsafe-cut-in", 2),
    ("safe-gap brake", lambda: brake(40.0), VALID, None, None),
    ("unsafe-gap brake", lambda: brake(20.0), INVALID, "unsafe-brake", 1),
    ("brake at d_safe + eps", lambda: brake(32.5 + EPS), VALID, None, None),
    ("brake at d_safe - eps", lambda: brake(32.5 - EPS), INVALID, "unsafe-brake", 1),
    ("mild deceleration below a_min", lambda: brake(20.0, a_adv=-0.5), VALID, None, None),
    ("rear-hit", lambda: rear_hit(2.0), INVALID, "rear-hit", 1),
    ("acceleration below a_min from behind", lambda: rear_hit(0.5), VALID, None, None),
    ("no collision", no_collision, NO_COLLISION, None, None),
    ("adversary cut-out, ego merges", cut_out_then_ego_merges, VALID, None, None),
    ("simultaneous lane change", simultaneous_lane_change, VALID, None, None),
    ("ego side swipe", ego_side_swipe, VALID, None, None),
    ("cut-in outranks brake", cut_in_then_brake, INVALID, "unsafe-cut-in", 2),
    ("earliest rear-hit onset", repeated_rear_hit, INVALID, "rear-hit", 2),
]
