"""Exact-math inequality suite on 1e4 seeded vectors for alpha in {0.2, 0.25, 0.3}."""

import argparse

from dyadic.experiments import ExperimentPlan, run_verify_suite
from dyadic.io import write_outputs
from dyadic.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-vectors", type=int, default=10_000)
    ap.add_argument("--out", default="runs/verify")
    args = ap.parse_args()

    ok = True
    for alpha in (0.2, 0.25, 0.3):
        plan = ExperimentPlan("verify_suite", params=ModelParams(alpha=alpha, n_modes=64), n_vectors=args.n_vectors,
                              output_dir=f"{args.out}/alpha{alpha}")
        art = run_verify_suite(plan)
        active = sorted({c["name"] for c in art.report["checks"] if not c["skipped"]})
        print(f"alpha={alpha}: gammas {art.report['gammas']}, {len(active)} active checks, "
              f"{len(art.report['counterexamples'])} counterexamples, {art.wall_time:.2f} s")
        for f in art.failures:
            print("  FAIL", f)
        ok &= art.ok
        write_outputs(art, plan.output_dir)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
