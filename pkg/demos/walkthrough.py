"""One seed of the two-step pipeline against the shipped SUT1, narrated.

Step 1 trains the validity-aware RL adversary and archives valid failures.
Step 2 replays archived behaviours from GA-searched initial conditions.
The failures are then de-duplicated and grouped into failure modes.

    python3 demos/walkthrough.py [--seed 1]
"""
import argparse

from dynasto.analytics import EVENT_NAMES, cluster_failures, dedup_pool
from dynasto.archive import replay
from dynasto.harness import load_sut
from dynasto.rl import train_adversary
from dynasto.search import run_search
from dynasto.validity import classify_failure


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--step1", type=int, default=3000)
    ap.add_argument("--step2", type=int, default=1000)
    args = ap.parse_args()

    sut = load_sut("SUT1")
    step1 = train_adversary(sut, args.step1, seed=args.seed)
    print(f"step 1: {step1.n_episodes} episodes, {step1.n_collisions} collisions, "
          f"{len(step1.archive)} valid failures archived")
    if not len(step1.archive):
        print("no archived behaviour to search from; try another seed")
        return

    rec = step1.archive[0]
    again = replay(rec, sut)
    print(f"replay of archive[0]: identical={again.dumps() == rec.trace.dumps()}, "
          f"label={classify_failure(again).label}")

    step2 = run_search(step1.archive, sut, args.step2, seed=args.seed,
                       index_offset=step1.n_steps)
    print(f"step 2: {step2.n_evaluations} evaluations, {step2.n_collisions} collisions, "
          f"{len(step2.failures)} valid failures; best fitness {step2.best_history[-1]:.2f}")

    pool = sorted(list(step1.archive) + step2.failures, key=lambda r: r.index)
    unique = dedup_pool(pool)
    print(f"{len(pool)} valid failures, {len(unique)} unique")
    if len(unique) < 2:
        return
    clusters = cluster_failures(unique, seed=args.seed)
    report = clusters.report()
    print(f"{clusters.partition.n_clusters} failure modes (modularity {report['modularity']:.3f}, k={report['k']})")
    for c in sorted(report["clusters"], key=lambda c: -c["size"]):
        codes = [int(x) for x in c["event_signature"].split(">") if x != "0"]
        names = " > ".join(EVENT_NAMES.get(x, f"{x}") for x in codes)
        print(f"  mode {c['id']}: {c['size']:3d} failures, exemplar {c['exemplar_trace_id']}: {names}")


if __name__ == "__main__":
    main()
