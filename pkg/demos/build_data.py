"""Regenerate the data files shipped in src/dynasto/data.

    python demos/build_data.py

Writes the two pretrained ego policies, the labeled event-vector set used to
tune k, and the similar/distinct pair set used to calibrate S_th.
"""
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from dynasto.analytics import calibrate_threshold, descriptive_vector, tune_k
from dynasto.archive import replay
from dynasto.rl import evaluate_sut, save_policy, train_adversary, train_sut
from dynasto.search import run_search

DATA = Path(__file__).resolve().parents[1] / "src" / "dynasto" / "data"

# Core event patterns of seven failure modes; each sample embeds one core in a
# zero background with a small offset and occasional spurious events.
MODES = {
    "cut-in then brake": [6, 0, 7, 7, 7],
    "adversary side cut-in": [4, 8, 8, 4, 8],
    "ego cut-in": [2, 2, 0, 2, 2],
    "ego cut-out": [3, 8, 3, 8, 3],
    "adversary cut-out, brake in other lane": [5, 5, 8, 8, 5],
    "brake in same lane": [7, 7, 0, 7, 7],
    "ego side cut-in": [1, 1, 1, 0, 1],
}
NOISE_CODES = (5, 8)


def build_suts(budget=8000, seed=0):
    for env in ("SUT1", "SUT2"):
        policy = train_sut(env, budget, seed=seed)
        stats = evaluate_sut(policy, env, 50, seed=123)
        save_policy(DATA / f"{env.lower()}.json", policy,
                    {"env": env, "budget": budget, "seed": seed, **stats})
        print(env, stats)


def build_event_fixture(per_mode=30, length=12, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for label, (name, core) in enumerate(MODES.items()):
        for _ in range(per_mode):
            v = [0] * length
            start = 4 + int(rng.integers(2))
            v[start:start + len(core)] = core
            if rng.random() < 0.3:
                zeros = [i for i in range(length) if v[i] == 0]
                v[int(rng.choice(zeros))] = int(rng.choice(NOISE_CODES))
            rows.append({"events": v + [999], "label": label, "mode": name})
    (DATA / "event_modes.json").write_text(json.dumps(rows))
    k, ari = tune_k([r["events"] for r in rows], [r["label"] for r in rows])
    print(f"event fixture: {len(rows)} vectors, best k={k}, ARI={ari:.3f}")


def build_calibration_pairs(n_similar=50, n_distinct=50, seed=0):
    """Similar pairs are a failure and a slightly perturbed replay of it; distinct pairs mix failures."""
    from dynasto.rl import load_policy

    sut = load_policy(DATA / "sut1.json")
    rng = np.random.default_rng(seed)
    failures = []
    for s in range(3):
        step1 = train_adversary(sut, 3000, seed=s)
        if len(step1.archive):
            failures += run_search(step1.archive, sut, 300, seed=s).failures
    pairs = []
    order = rng.permutation(len(failures))
    for i in order:
        if len(pairs) >= n_similar:
            break
        rec = failures[i]
        cfg = rec.config
        jitter = replace(cfg, x_ego=cfg.x_ego + float(rng.uniform(-0.5, 0.5)),
                         s_ego=cfg.s_ego + float(rng.uniform(-0.2, 0.2)))
        twin = replay(replace(rec, config=jitter), sut)
        if twin.collided:
            pairs.append({"a": descriptive_vector(rec.trace).tolist(),
                          "b": descriptive_vector(twin).tolist(), "similar": True})
    while len(pairs) < n_similar + n_distinct:
        i, j = rng.choice(len(failures), 2, replace=False)
        a, b = failures[i], failures[j]
        if a.config == b.config:
            continue
        pairs.append({"a": descriptive_vector(a.trace).tolist(),
                      "b": descriptive_vector(b.trace).tolist(), "similar": False})
    (DATA / "calibration_pairs.json").write_text(json.dumps(pairs))
    d = [np.linalg.norm(np.subtract(p["a"], p["b"])) for p in pairs]
    s_th, acc = calibrate_threshold(d, [p["similar"] for p in pairs])
    print(f"calibration: {len(pairs)} pairs, S_th={s_th:.3f}, accuracy={acc:.3f}")


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    build_suts()
    build_event_fixture()
    build_calibration_pairs()
