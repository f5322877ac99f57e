"""Unique valid failures of VARL against Dynasto-GA across seeds, with the rank test.

    python3 demos/compare_methods.py --seeds 5 --out runs/compare
"""
import argparse
import json

from dynasto.harness import ExperimentConfig, emit_report, run_pipeline, summary
from dynasto.stats import compare, effect_dots, significance_stars


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    results = []
    for method in ("varl", "dynasto-ga"):
        cfg = ExperimentConfig(method=method, seeds=list(range(args.seeds)), out_dir=args.out)
        results += run_pipeline(cfg, jobs=args.jobs)
    emit_report(results, args.out)

    by = {m: [r.n_unique for r in results if r.method == m] for m in ("varl", "dynasto-ga")}
    for m, vals in by.items():
        print(f"{m:>11}: unique valid failures per seed {vals}")
    st = compare("dynasto-ga", by["dynasto-ga"], "varl", by["varl"])
    print(f"Mann-Whitney U={st.u:.1f} p={st.p:.4f}{significance_stars(st.p)}  "
          f"Cliff's delta={st.delta:.2f} ({st.band}){effect_dots(st.delta)}")
    print(json.dumps({m: s["n_unique"] for m, s in summary(results).items()}, indent=2))


if __name__ == "__main__":
    main()
