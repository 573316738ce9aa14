"""Absorbing-ball probe for alpha in {1/4, 1/2} and the sup ||u||_{1/3+gamma} trend in g1."""

import argparse

from dyadic.experiments import ExperimentPlan, attractor_norm_trend, run_attractor_probe
from dyadic.integrator import StepperConfig
from dyadic.io import write_outputs
from dyadic.model import ModelParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--modes", type=int, default=20)
    ap.add_argument("--out", default="runs/attractor")
    args = ap.parse_args()

    stepper = StepperConfig(rel_tol=1e-10, abs_tol=1e-14)
    for alpha in (0.25, 0.5):
        plan = ExperimentPlan(
            "attractor_probe",
            params=ModelParams(alpha=alpha, n_modes=args.modes),
            t_end=10.0,
            stepper=stepper,
            output_dir=f"{args.out}/alpha{alpha}",
        )
        art = run_attractor_probe(plan)
        r = art.report["runs"][0]
        print(f"alpha={alpha}: |u0|={r['initial_norm']:.2f} radius={r['radius']:.2f} "
              f"entry t={r['entry_time']} resident={r['resident']} gronwall={r['gronwall_ok']}")
        write_outputs(art, plan.output_dir)

    # reported only: no threshold in g1 is claimed
    plan = ExperimentPlan("attractor_probe", params=ModelParams(alpha=0.25, n_modes=12), t_end=10.0, stepper=stepper)
    for g1, s in attractor_norm_trend(plan, [0.5, 1.0, 2.0, 4.0, 8.0]):
        print(f"g1={g1:<4} post-transient sup ||u||_1/3+gamma = {s:.4g}")


if __name__ == "__main__":
    main()
