"""Global-regularity check at alpha=1/2: N=32 vs 64, g=e1, u(0)=e1, t in [0, 100]."""

import argparse

from dyadic.experiments import ExperimentPlan, run_regularity_study
from dyadic.integrator import StepperConfig
from dyadic.io import write_outputs
from dyadic.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--t-end", type=float, default=100.0)
    ap.add_argument("--out", default="runs/regularity")
    args = ap.parse_args()

    plan = ExperimentPlan(
        "regularity_study",
        params=ModelParams(alpha=args.alpha, force=(1.0,)),
        n_list=(32, 64),
        t_end=args.t_end,
        init=(1.0,),
        stepper=StepperConfig(rel_tol=1e-10, abs_tol=1e-14),
        workers=2,
        output_dir=args.out,
    )
    art = run_regularity_study(plan)
    for r in art.report["runs"]:
        extra = f"  energy residual {r['energy_equality_residual']:.2e}" if "energy_equality_residual" in r else ""
        print(f"N={r['n_modes']:>3}  sup ||u|| {r['sup_enstrophy_norm']:.8f}  ledger ok {r['ledger_ok']}{extra}")
    if "sup_refinement_change" in art.report:
        print("sup change under doubling:", art.report["sup_refinement_change"])
    if "note" in art.report:
        print(art.report["note"])
    print(f"ok {art.ok}; wrote {write_outputs(art, args.out)} in {art.wall_time:.1f} s")


if __name__ == "__main__":
    main()
