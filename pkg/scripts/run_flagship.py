"""Blow-up refinement study at lambda=2, nu=1, alpha=1/4, gamma=0.1 on N = 40, 80, 160."""

import argparse

from dyadic.experiments import ExperimentPlan, run_blowup_study
from dyadic.io import write_outputs
from dyadic.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/flagship")
    ap.add_argument("--workers", type=int, default=3)
    args = ap.parse_args()

    plan = ExperimentPlan(
        "blowup_study",
        params=ModelParams(lam=2.0, nu=1.0, alpha=0.25),
        gamma=0.1,
        n_list=(40, 80, 160),
        workers=args.workers,
        output_dir=args.out,
    )
    art = run_blowup_study(plan)
    rep = art.report
    print(f"margin {rep.margin:.3f}  t* {rep.t_star:.6f}  valid {rep.valid}")
    print(f"{'N':>5} {'horizon':>20} {'max ||u||_1/3+g':>18} {'domination':>11} {'monotone':>9}")
    for q in rep.per_n:
        print(f"{q.n_modes:>5} {q.horizon:>20.12e} {q.max_norm_third:>18.6g} {q.domination_ok!s:>11} {q.h_monotone_ok!s:>9}")
    print("growth per doubling:", ", ".join(f"{f:.2f}x" for f in rep.growth_factors))
    print(f"horizon nondecreasing {rep.horizon_nondecreasing}, growth >= 10x {rep.growth_ok}")
    print(f"wrote {write_outputs(art, args.out)} in {art.wall_time:.1f} s")


if __name__ == "__main__":
    main()
