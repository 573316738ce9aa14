"""Experiment drivers: blow-up refinement studies, regularity ledgers,
absorbing-ball probes and the randomized identity/inequality sweep."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .diagnostics import (
    BlowupReport,
    DiagnosticsRecord,
    RefinementPoint,
    compute_records,
    cumulative_budget_residual,
    energy_equality_check,
    energy_inequality_excess,
    gronwall_bound,
    inequality_batch,
    monitor_records,
)
from .errors import AdmissibilityError, ConfigError
from .integrator import (
    INTEGRATING_FACTOR,
    EventSpec,
    StepperConfig,
    integrate,
    positivity_floor,
)
from .model import ModelParams, State, constants, default_gamma, gamma_interval, weights

KINDS = ("simulate", "blowup_study", "regularity_study", "attractor_probe", "verify_suite")


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    params: ModelParams = field(default_factory=ModelParams)
    gamma: float | None = None  # None: default for the kind
    n_list: tuple[int, ...] = ()
    t_end: float = 1.0
    stepper: StepperConfig = field(default_factory=StepperConfig)
    seed: int = 0
    output_dir: str = "runs/latest"
    init: tuple[float, ...] | None = None  # None: the kind's default initial data
    sample_every: float | None = None
    tail_tol: float = 1e-6
    tail_width: int = 5
    tail_gamma: float | None = None  # None: 1/3 + gamma for blow-up studies, gamma otherwise
    stop_norm: float | None = None  # terminal norm_threshold event in ||.||_gamma
    n_vectors: int = 10_000
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        n_list = tuple(int(n) for n in self.n_list)
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ConfigError("n_list must be strictly increasing")
        if any(n < 1 for n in n_list):
            raise ConfigError("truncations must be positive")
        object.__setattr__(self, "n_list", n_list)
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.init is not None:
            object.__setattr__(self, "init", tuple(float(x) for x in self.init))
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.n_vectors < 0:
            raise ConfigError("n_vectors must be nonnegative")

    @property
    def truncations(self) -> tuple[int, ...]:
        return self.n_list or (self.params.n_modes,)

    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        a = self.params.alpha
        return default_gamma(a) if a < 1 / 3 else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["params"]["force"] = list(self.params.force)
        d["n_list"] = list(self.n_list)
        d["init"] = None if self.init is None else list(self.init)
        d["gamma"] = self.resolved_gamma()
        return d


@dataclass
class RunArtifact:
    """Outcome of one plan.  ``records[N]`` is the diagnostics stream of the
    run at truncation N; ``report`` is a BlowupReport or a plain dict."""

    plan: ExperimentPlan
    records: dict[int, list[DiagnosticsRecord]]
    report: object
    wall_time: float
    ok: bool = True
    failures: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# initial data


def random_initial(n: int, seed: int, lam: float = 2.0, scale: float = 1.0) -> np.ndarray:
    """Nonnegative data u_n = U_n lam^(-n), U_n ~ U(0,1), rescaled to |u| = scale."""
    rng = np.random.default_rng(seed)
    u = rng.random(n) * weights(lam, -1.0, n)
    nrm = math.sqrt(float(np.dot(u, u)))
    return u * (scale / nrm) if nrm > 0 else u


def _initial(plan: ExperimentPlan, params: ModelParams, default) -> np.ndarray:
    if plan.init is None:
        u = np.asarray(default(params.n_modes), dtype=float)
    else:
        u = np.zeros(params.n_modes)
        k = min(len(plan.init), params.n_modes)
        u[:k] = plan.init[:k]
    return u


def _events(plan: ExperimentPlan, gamma: float) -> list[EventSpec]:
    if plan.stop_norm is None:
        return []
    return [EventSpec("norm_threshold", plan.stop_norm, gamma=gamma)]


def _map(fn, items, workers: int):
    """Order-preserving map, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# simulate


def run_simulation(plan: ExperimentPlan) -> RunArtifact:
    """Plain integration with diagnostics at each truncation in the plan."""
    t0 = time.perf_counter()
    gamma = plan.resolved_gamma()
    consts = constants(plan.params, gamma, strict=False)
    records, runs = {}, []
    for n in plan.truncations:
        p = plan.params.with_modes(n)
        u0 = _initial(plan, p, lambda k: random_initial(k, plan.seed, p.lam))
        tr = integrate(State(0.0, u0), plan.t_end, p, plan.stepper, _events(plan, gamma), plan.sample_every)
        records[n] = compute_records(tr, gamma, consts, plan.tail_width, plan.tail_gamma)
        runs.append(
            {
                "n_modes": n,
                "status": tr.status,
                "t_final": float(tr.times[-1]),
                "n_samples": len(tr),
                "n_steps": tr.n_steps,
                "n_rejected": tr.n_rejected,
                "mode": tr.mode,
                "events": [{"t": e.t, "kind": e.spec.kind, "value": e.value} for e in tr.events],
                "min_mode": positivity_floor(tr),
                "max_budget_residual": float(np.max(np.abs(cumulative_budget_residual(tr))))
                if len(tr) > 1
                else 0.0,
            }
        )
    return RunArtifact(plan, records, {"kind": "simulate", "runs": runs}, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# blow-up


def blowup_stepper(base: StepperConfig | None = None) -> StepperConfig:
    """Stepper defaults for blow-up runs: integrating factor, absolute tolerance
    far below the tail amplitudes and a step floor well under the collapse scale."""
    base = base or StepperConfig()
    return replace(
        base,
        mode=INTEGRATING_FACTOR,
        abs_tol=min(base.abs_tol, 1e-30),
        dt_init=min(base.dt_init, 1e-8),
        dt_min=1e-80 if base.dt_min is None else base.dt_min,
    )


def _blowup_one(args):
    plan, n, gamma, tail_gamma = args
    p = plan.params.with_modes(n)
    cfg = blowup_stepper(plan.stepper)
    consts = constants(p, gamma)
    a0 = 2 * consts.m_gamma * p.lam**-gamma

    def default(k):
        u = np.zeros(k)
        u[0] = a0
        return u

    u0 = _initial(plan, p, default)
    ev = [EventSpec("tail_fraction", plan.tail_tol, gamma=tail_gamma, tail_width=plan.tail_width)]
    ev += _events(plan, gamma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tr = integrate(State(0.0, u0), plan.t_end, p, cfg, ev, plan.sample_every)
    recs = compute_records(tr, gamma, consts, plan.tail_width, tail_gamma)
    return n, tr.status, recs


def run_blowup_study(plan: ExperimentPlan) -> RunArtifact:
    """Integrate at each truncation, compare H against the Riccati solution and
    record the refinement trend (horizon and max ||u||_{1/3+gamma} versus N)."""
    t0 = time.perf_counter()
    p = plan.params
    if p.nu == 0:
        raise AdmissibilityError("blow-up studies need nu > 0 (the inviscid case is not covered)")
    gamma = plan.resolved_gamma()
    consts = constants(p, gamma)  # raises on inadmissible (alpha, gamma)
    tail_gamma = 1 / 3 + gamma if plan.tail_gamma is None else plan.tail_gamma

    results = _map(_blowup_one, [(plan, n, gamma, tail_gamma) for n in plan.truncations], plan.workers)
    records, per_n, reports = {}, [], []
    for n, status, recs in results:
        records[n] = recs
        rep = _report_from_records(recs, gamma, p.with_modes(n), plan)
        reports.append(rep)
        per_n.append(
            RefinementPoint(n, rep.horizon, rep.max_norm_third, rep.domination_ok, rep.h_monotone_ok, status)
        )

    first = reports[0]
    report = BlowupReport(
        consts=consts,
        initial_norm_gamma=first.initial_norm_gamma,
        margin=first.margin,
        domination_ok=all(r.domination_ok for r in reports),
        horizon=reports[-1].horizon,
        h_monotone_ok=all(r.h_monotone_ok for r in reports),
        t_star=first.t_star,
        integral_ok=all(r.integral_ok for r in reports),
        max_norm_third=reports[-1].max_norm_third,
        valid=first.valid,
        notes=list(first.notes),
        per_n=per_n,
    )
    if report.valid and len(per_n) > 1:
        report.horizon_nondecreasing = refinement_horizon_ok(per_n)
        report.growth_factors = [b.max_norm_third / a.max_norm_third for a, b in zip(per_n, per_n[1:])]
        report.growth_ok = all(f >= 10 for f in report.growth_factors)
    elif not report.valid:
        report.notes.append("margin <= 1: refinement trend not asserted")

    failures = []
    if report.valid:
        if not report.h_monotone_ok:
            failures.append("H decreased while above M^2")
        if not report.domination_ok:
            failures.append("H fell below the Riccati solution inside the comparison window")
        if report.horizon_nondecreasing is False:
            failures.append("blow-up horizon decreased under refinement")
    return RunArtifact(plan, records, report, time.perf_counter() - t0, not failures, failures)


def refinement_horizon_ok(per_n, rtol: float = 1e-9) -> bool:
    """Horizon nondecreasing in N up to a relative sampling tolerance."""
    return all(b.horizon >= a.horizon * (1 - rtol) for a, b in zip(per_n, per_n[1:]))


def _report_from_records(recs, gamma, params, plan) -> BlowupReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return monitor_records(recs, constants(params, gamma), plan.tail_tol)


def rederive_blowup(records: dict[int, list[DiagnosticsRecord]], plan: ExperimentPlan) -> list[RefinementPoint]:
    """Recompute the per-N refinement table from persisted records alone."""
    gamma = plan.resolved_gamma()
    out = []
    for n in sorted(records):
        rep = _report_from_records(records[n], gamma, plan.params.with_modes(n), plan)
        out.append(RefinementPoint(n, rep.horizon, rep.max_norm_third, rep.domination_ok, rep.h_monotone_ok, ""))
    return out


# ---------------------------------------------------------------------------
# regularity


def young_constant(c_b: float, alpha: float, nu: float) -> float:
    """c with c_b X^(1/a-1) Y^(4-1/a) <= (nu/3) X^2 + c Y^((8a-2)/(3a-1)) for X, Y >= 0."""
    theta = (1 - alpha) / (2 * alpha)
    if theta == 0:
        return c_b
    return (1 - theta) * c_b ** (1 / (1 - theta)) * (3 * theta / nu) ** (theta / (1 - theta))


def enstrophy_ledger_exponent(alpha: float) -> float:
    return (8 * alpha - 2) / (3 * alpha - 1)


def _regularity_one(args):
    plan, n = args
    p = plan.params.with_modes(n)
    gamma = plan.resolved_gamma()
    a, nu = p.alpha, p.nu
    c = young_constant(constants(p, 0.0, strict=False).c_b_impl, a, nu)
    r = enstrophy_ledger_exponent(a)
    w_a, w_2a = weights(p.lam, 2 * a, n), weights(p.lam, 4 * a, n)

    def ledger(u):
        ens = float(np.dot(w_a, u * u))
        return -(2 * nu / 3) * float(np.dot(w_2a, u * u)) + 2 * c * ens ** (r / 2)

    def default(k):
        u = np.zeros(k)
        u[0] = 1.0
        return u

    u0 = _initial(plan, p, default)
    tr = integrate(
        State(0.0, u0), plan.t_end, p, plan.stepper, _events(plan, gamma), plan.sample_every,
        quadrature=(("enstrophy_ledger",), ledger),
    )
    consts = constants(p, gamma, strict=False)
    recs = compute_records(tr, gamma, consts, plan.tail_width, plan.tail_gamma)

    # F(t) = ||u(t)||^2 - int(ledger rhs) must be nonincreasing
    ens = np.array([rec.enstrophy for rec in recs])
    s = tr.times - tr.times[0]
    f = ens - tr.integrals["enstrophy_ledger"] - 1.5 / nu * float(np.dot(p.g, p.g)) * s
    scale = max(1.0, float(np.max(np.abs(tr.integrals["enstrophy_ledger"]))), float(ens.max()))
    excess = float(np.max(f - np.minimum.accumulate(f)))
    sup_u2 = float(max(rec.energy for rec in recs))
    out = {
        "n_modes": n,
        "status": tr.status,
        "t_final": float(tr.times[-1]),
        "young_constant": c,
        "ledger_exponent": r,
        "ledger_excess": excess,
        "ledger_ok": excess <= 1e-6 * scale,
        "sup_enstrophy_norm": float(math.sqrt(ens.max())),
        "sup_energy": sup_u2,
        "min_mode": positivity_floor(tr),
        "inequality_excess": energy_inequality_excess(tr),
    }
    if a >= 0.5:
        out["energy_equality_residual"] = energy_equality_check(tr)
        out["energy_equality_ok"] = out["energy_equality_residual"] <= 1e-6 * max(sup_u2, 1e-300) or sup_u2 == 0
    return n, recs, out


def run_regularity_study(plan: ExperimentPlan) -> RunArtifact:
    """Check the enstrophy ledger along runs with alpha > 1/3; for alpha >= 1/2
    also the boundedness of ||u|| and the energy equality."""
    t0 = time.perf_counter()
    a = plan.params.alpha
    if not a > 1 / 3:
        raise AdmissibilityError(f"regularity studies need alpha > 1/3, got alpha={a}")
    if a > 1:
        raise AdmissibilityError(f"the interpolated enstrophy bound needs alpha <= 1, got alpha={a}")
    if plan.params.nu == 0:
        raise AdmissibilityError("regularity studies need nu > 0")
    results = _map(_regularity_one, [(plan, n) for n in plan.truncations], plan.workers)
    records = {n: recs for n, recs, _ in results}
    runs = [out for *_, out in results]
    failures = [f"N={r['n_modes']}: enstrophy ledger violated by {r['ledger_excess']:.3g}" for r in runs if not r["ledger_ok"]]
    report = {"kind": "regularity_study", "alpha": a, "global_regime": a >= 0.5, "runs": runs}
    if a >= 0.5:
        for r in runs:
            if not math.isfinite(r["sup_enstrophy_norm"]):
                failures.append(f"N={r['n_modes']}: enstrophy norm not bounded")
            if not r["energy_equality_ok"]:
                failures.append(f"N={r['n_modes']}: energy equality residual {r['energy_equality_residual']:.3g}")
        if len(runs) > 1:
            sups = [r["sup_enstrophy_norm"] for r in runs]
            changes = [abs(y - x) / x for x, y in zip(sups, sups[1:])]
            report["sup_refinement_change"] = changes
            report["sup_stable"] = all(ch < 0.01 for ch in changes)
            if not report["sup_stable"]:
                failures.append("sup ||u|| changes by 1% or more under refinement")
    else:
        report["note"] = "1/3 < alpha < 1/2: local regime, no global claim"
    report["ok"] = not failures
    return RunArtifact(plan, records, report, time.perf_counter() - t0, not failures, failures)


# ---------------------------------------------------------------------------
# absorbing ball


def absorbing_radius(params: ModelParams) -> float:
    return 1.01 * math.sqrt(float(np.dot(params.g, params.g))) / params.nu


def _attractor_one(args):
    plan, n = args
    p = plan.params.with_modes(n)
    gamma = plan.resolved_gamma()
    big = 10 * max(absorbing_radius(p), 1.0)
    u0 = _initial(plan, p, lambda k: random_initial(k, plan.seed, p.lam, big))
    tr = integrate(State(0.0, u0), plan.t_end, p, plan.stepper, (), plan.sample_every)
    recs = compute_records(tr, gamma, constants(p, gamma, strict=False), plan.tail_width, plan.tail_gamma)
    norms = np.sqrt(np.array([r.energy for r in recs]))
    R = absorbing_radius(p)
    gron = gronwall_bound(tr)
    gron_ok = bool(np.all(norms**2 <= gron * (1 + 1e-8) + 1e-14))
    if R > 0:
        inside = np.nonzero(norms <= R)[0]
        entry = int(inside[0]) if inside.size else None
    else:
        # g = 0: every ball is entered; check decay instead
        inside = np.nonzero(norms <= 1e-3 * max(norms[0], 1e-300))[0]
        entry = int(inside[0]) if inside.size else None
    if entry is None:
        resident = False
        tail = slice(len(recs) // 2, None)
    else:
        resident = bool(np.all(norms[entry:] <= R)) if R > 0 else bool(np.all(np.diff(norms) <= 1e-12 * norms[0]))
        tail = slice(entry, None)
    post = [r.norm_third for r in recs[tail]]
    out = {
        "n_modes": n,
        "status": tr.status,
        "radius": R,
        "initial_norm": float(norms[0]),
        "entry_time": None if entry is None else float(recs[entry].t),
        "resident": resident,
        "gronwall_ok": gron_ok,
        "post_transient_sup_norm_third": float(max(post)) if post else None,
    }
    return n, recs, out


def run_attractor_probe(plan: ExperimentPlan) -> RunArtifact:
    """Entry into and residence in the ball |u| <= 1.01 |g| / nu."""
    t0 = time.perf_counter()
    p = plan.params
    if p.nu == 0:
        raise AdmissibilityError("the absorbing-ball probe needs nu > 0")
    if plan.t_end < 10 / p.nu * (1 - 1e-12):
        raise ConfigError(f"t_end={plan.t_end} is shorter than 10/nu={10 / p.nu}")
    results = _map(_attractor_one, [(plan, n) for n in plan.truncations], plan.workers)
    records = {n: recs for n, recs, _ in results}
    runs = [out for *_, out in results]
    failures = []
    for r in runs:
        if r["entry_time"] is None:
            failures.append(f"N={r['n_modes']}: never entered the absorbing ball")
        elif not r["resident"]:
            failures.append(f"N={r['n_modes']}: left the absorbing ball after entry")
        if not r["gronwall_ok"]:
            failures.append(f"N={r['n_modes']}: Gronwall energy bound violated")
    report = {"kind": "attractor_probe", "runs": runs, "ok": not failures}
    return RunArtifact(plan, records, report, time.perf_counter() - t0, not failures, failures)


def attractor_norm_trend(plan: ExperimentPlan, g1_values) -> list[tuple[float, float]]:
    """Post-transient sup ||u||_{1/3+gamma} for each forcing amplitude (reported only)."""
    out = []
    for g1 in g1_values:
        pl = replace(plan, params=plan.params.replace(force=(g1,)))
        art = run_attractor_probe(pl)
        out.append((float(g1), art.report["runs"][-1]["post_transient_sup_norm_third"]))
    return out


# ---------------------------------------------------------------------------
# randomized identity and inequality sweep


def random_vectors(m: int, n: int, seed: int, signed: bool = False) -> np.ndarray:
    """Seeded mix of flat, geometrically decaying and two-mode vectors."""
    rng = np.random.default_rng(seed)
    U = rng.random((m, n))
    third = m // 3
    rates = rng.random((third, 1)) * 1.5
    U[:third] *= np.exp2(-rates * np.arange(n))
    # adjacent pairs: the configurations where the bounds are nearly attained
    for i in range(third, 2 * third):
        k = rng.integers(0, max(n - 1, 1))
        row = np.zeros(n)
        row[k] = rng.random()
        if n > 1:
            row[k + 1] = rng.random() * 10.0 ** rng.uniform(-3, 1)
        U[i] = row
    U *= 10.0 ** rng.uniform(-3, 3, size=(m, 1))
    if signed:
        U *= rng.choice([-1.0, 1.0], size=U.shape)
    return U


def verify_gamma_grid(alpha: float, k: int = 4) -> list[float]:
    lo, hi = gamma_interval(alpha)
    if hi <= 0:
        return [0.0]
    return [lo + (hi - lo) * (i + 1) / (k + 1) for i in range(k)]


def run_verify_suite(plan: ExperimentPlan, corrupt_c1: float | None = None) -> RunArtifact:
    """Every identity and inequality on seeded random vectors; failures are data."""
    t0 = time.perf_counter()
    p = plan.params
    gammas = [plan.gamma] if plan.gamma is not None else verify_gamma_grid(p.alpha)
    m = plan.n_vectors
    if m == 0:
        warnings.warn("verify suite called with no vectors: vacuous pass", RuntimeWarning)
    table, failures, counterexamples = [], [], []
    for j, gamma in enumerate(gammas):
        for signed in (False, True):
            U = random_vectors(m, p.n_modes, plan.seed + 2 * j + signed, signed)
            for chk in inequality_batch(U, p, gamma, corrupt_c1):
                bad = np.nonzero(~chk.ok)[0]
                table.append(
                    {
                        "name": chk.name,
                        "gamma": gamma,
                        "signed": signed,
                        "n": m,
                        "failures": int(bad.size),
                        "skipped": chk.skipped,
                    }
                )
                if bad.size:
                    i = int(bad[0])
                    failures.append(f"{chk.name} (gamma={gamma}, signed={signed}): {bad.size} failures")
                    counterexamples.append(
                        {"check": chk.name, "gamma": gamma, "lhs": float(chk.lhs[i]),
                         "rhs": float(chk.rhs[i]), "u": U[i].tolist()}
                    )
    pos = _positivity_sweep(plan)
    if pos < -1e-10:
        failures.append(f"positivity floor {pos:.3g} below -1e-10")
    report = {
        "kind": "verify_suite",
        "gammas": gammas,
        "checks": table,
        "positivity_floor": pos,
        "counterexamples": counterexamples,
        "ok": not failures,
    }
    return RunArtifact(plan, {}, report, time.perf_counter() - t0, not failures, failures)


def _positivity_sweep(plan: ExperimentPlan) -> float:
    p = plan.params.with_modes(min(plan.params.n_modes, 16))
    cfg = StepperConfig(rel_tol=1e-10, abs_tol=1e-14)
    u0 = random_initial(p.n_modes, plan.seed, p.lam)
    return positivity_floor(integrate(State(0.0, u0), 0.5, p, cfg))


RUNNERS = {
    "simulate": run_simulation,
    "blowup_study": run_blowup_study,
    "regularity_study": run_regularity_study,
    "attractor_probe": run_attractor_probe,
    "verify_suite": run_verify_suite,
}


def run(plan: ExperimentPlan) -> RunArtifact:
    return RUNNERS[plan.kind](plan)
