"""Inequalities, budgets and the Lyapunov/Riccati blow-up monitor.

Everything here is a pure function of a :class:`~dyadic.integrator.Trajectory`
or of a single vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FitRejected, PastBlowupError
from .integrator import Trajectory, tail_fraction
from .model import (
    ConstantSet,
    ModelParams,
    constants,
    energy,
    lyapunov_h,
    norm_gamma,
    trilinear_b_au,
    weights,
)

RECORD_FIELDS = (
    "t",
    "energy",
    "enstrophy",
    "norm_gamma_sq",
    "norm_third",
    "h_value",
    "riccati_value",
    "min_mode",
    "tail_fraction",
    "energy_budget_residual",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    energy: float
    enstrophy: float
    norm_gamma_sq: float
    norm_third: float
    h_value: float | None
    riccati_value: float | None
    min_mode: float
    tail_fraction: float
    energy_budget_residual: float

    def row(self) -> tuple:
        return tuple(getattr(self, k) for k in RECORD_FIELDS)


@dataclass(frozen=True)
class RiccatiBound:
    """Solution of y' = c y^(3/2), y(0) = y0, which blows up at t_star."""

    y0: float
    c: float
    t_star: float

    @classmethod
    def from_h0(cls, h0: float, c: float) -> "RiccatiBound":
        y0 = 0.5 * h0
        if not (y0 > 0 and c > 0):
            raise ValueError("Riccati bound needs H(0) > 0 and c > 0")
        return cls(y0, c, 2.0 / (c * math.sqrt(y0)))


def riccati_eval(b: RiccatiBound, t: float) -> float:
    """y0 / (1 - c sqrt(y0) t / 2)^2 for 0 <= t < t_star.

    Written this way the value is monotone in t under rounding and never
    drops below y0.
    """
    if t >= b.t_star:
        raise PastBlowupError(t, b.t_star)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(b.y0 / (1.0 - 0.5 * b.c * math.sqrt(b.y0) * t) ** 2)


# ---------------------------------------------------------------------------
# energy budget


def _cumulative(traj: Trajectory, name: str, integrand, method: str) -> np.ndarray:
    if method == "auto":
        method = "integrals" if name in traj.integrals else "trapezoid"
    if method == "integrals":
        return np.asarray(traj.integrals[name], dtype=float)
    if method != "trapezoid":
        raise ValueError(f"unknown quadrature method {method!r}")
    f = np.array([integrand(u) for u in traj.states])
    out = np.zeros(len(traj))
    out[1:] = np.cumsum(0.5 * np.diff(traj.times) * (f[1:] + f[:-1]))
    return out


def cumulative_budget_residual(traj: Trajectory, params: ModelParams | None = None, method: str = "auto") -> np.ndarray:
    """R(t_k) = |u(t_k)|^2 - |u(t_0)|^2 + 2 nu int ||u||^2 - 2 int (g, u), from the first sample."""
    p = params or traj.params
    if len(traj) < 2:
        raise ValueError("energy budget needs at least two samples")
    w = weights(p.lam, 2 * p.alpha, p.n_modes)
    enst = _cumulative(traj, "enstrophy", lambda u: float(np.dot(w * u, u)), method)
    work = _cumulative(traj, "forcing_work", lambda u: float(np.dot(p.g, u)), method)
    e = np.einsum("ij,ij->i", traj.states, traj.states)
    return e - e[0] + 2 * p.nu * enst - 2 * work


def energy_budget(traj: Trajectory, params: ModelParams | None = None, method: str = "auto") -> np.ndarray:
    """Residual of the energy budget over each consecutive sample interval.

    ``r <= tol`` everywhere certifies the energy inequality and ``|r| <= tol``
    the equality.  ``method`` is ``"integrals"`` (the quadrature channels the
    integrator carried along the stages), ``"trapezoid"`` (composite trapezoid
    over the samples) or ``"auto"`` (integrals when present).
    """
    return np.diff(cumulative_budget_residual(traj, params, method))


def energy_equality_check(traj: Trajectory, params: ModelParams | None = None, method: str = "auto") -> float:
    """max |r| of the budget residual over all sample pairs (t_0 <= t)."""
    p = params or traj.params
    if p.alpha < 0.5:
        warnings.warn(
            "energy equality is only guaranteed for alpha >= 1/2; reporting, not asserting",
            RuntimeWarning,
        )
    if len(traj) < 2:
        return 0.0
    r = cumulative_budget_residual(traj, p, method)
    return float(r.max() - r.min())


def energy_inequality_excess(traj: Trajectory, params: ModelParams | None = None, method: str = "auto") -> float:
    """max over pairs t_i <= t_j of R(t_j) - R(t_i); <= tol certifies the inequality."""
    if len(traj) < 2:
        return 0.0
    r = cumulative_budget_residual(traj, params, method)
    return float(np.max(r - np.minimum.accumulate(r)))


def gronwall_bound(traj: Trajectory, params: ModelParams | None = None) -> np.ndarray:
    """e^(-nu t)|u(0)|^2 + |g|^2/nu^2 (1 - e^(-nu t)) at each sample."""
    p = params or traj.params
    if not p.nu > 0:
        raise ValueError("the Gronwall bound needs nu > 0")
    s = traj.times - traj.times[0]
    e0 = energy(traj.states[0])
    gg = energy(p.g)
    decay = np.exp(-p.nu * s)
    return decay * e0 + gg / p.nu**2 * (-np.expm1(-p.nu * s))


# ---------------------------------------------------------------------------
# records


def compute_records(
    traj: Trajectory,
    gamma: float,
    consts: ConstantSet | None = None,
    tail_width: int = 5,
    tail_gamma: float | None = None,
) -> list[DiagnosticsRecord]:
    """Per-sample diagnostics.

    ``h_value`` and ``riccati_value`` need blow-up constants; they are None when
    ``consts`` is missing or has NaN ``c2``.  ``tail_fraction`` is measured in
    ``||.||_tail_gamma`` (default: ``gamma``).
    """
    p = traj.params
    tg = gamma if tail_gamma is None else tail_gamma
    have_h = consts is not None and math.isfinite(consts.c2)
    bound = None
    if have_h and math.isfinite(consts.c_riccati):
        h0 = lyapunov_h(traj.states[0], gamma, consts, p)
        if h0 > 0:
            bound = RiccatiBound.from_h0(h0, consts.c_riccati)
    resid = cumulative_budget_residual(traj) if len(traj) >= 2 else np.zeros(len(traj))
    t0 = traj.times[0] if len(traj) else 0.0
    out = []
    for k, (t, u) in enumerate(zip(traj.times, traj.states)):
        ng = norm_gamma(u, gamma, p)
        ric = None
        if bound is not None and t - t0 < bound.t_star:
            ric = riccati_eval(bound, t - t0)
        out.append(
            DiagnosticsRecord(
                t=float(t),
                energy=energy(u),
                enstrophy=norm_gamma(u, p.alpha, p) ** 2,
                norm_gamma_sq=ng * ng,
                norm_third=norm_gamma(u, 1.0 / 3.0 + gamma, p),
                h_value=lyapunov_h(u, gamma, consts, p) if have_h else None,
                riccati_value=ric,
                min_mode=float(u.min()) if u.size else 0.0,
                tail_fraction=tail_fraction(u, tg, tail_width, p),
                energy_budget_residual=float(resid[k]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# blow-up monitor


@dataclass(frozen=True)
class RefinementPoint:
    n_modes: int
    horizon: float
    max_norm_third: float
    domination_ok: bool
    h_monotone_ok: bool
    status: str


@dataclass
class BlowupReport:
    consts: ConstantSet
    initial_norm_gamma: float
    margin: float
    domination_ok: bool
    horizon: float
    h_monotone_ok: bool
    t_star: float
    integral_ok: bool = True
    max_norm_third: float = 0.0
    valid: bool = True
    notes: list[str] = field(default_factory=list)
    # N-refinement trend: a finite-dimensional surrogate for non-integrability
    per_n: list[RefinementPoint] = field(default_factory=list)
    horizon_nondecreasing: bool | None = None
    growth_factors: list[float] = field(default_factory=list)
    growth_ok: bool | None = None


def blowup_monitor(
    traj: Trajectory,
    gamma: float,
    consts: ConstantSet,
    params: ModelParams | None = None,
    tail_tol: float = 1e-6,
    tail_width: int = 5,
    cmp_tol: float = 1e-3,
    mono_tol: float = 1e-9,
    cutoff: float = 0.95,
    tail_gamma: float | None = None,
    records: list[DiagnosticsRecord] | None = None,
) -> BlowupReport:
    """Compare H(t) against the Riccati solution started at H(0)/2.

    The comparison window is ``t <= min(horizon, cutoff * t_star)`` where the
    horizon is the first sample whose top ``tail_width`` modes carry more than
    ``tail_tol`` of the tail norm (the end of the trajectory otherwise).
    """
    recs = records or compute_records(traj, gamma, consts, tail_width, tail_gamma)
    return monitor_records(recs, consts, tail_tol, cmp_tol, mono_tol, cutoff)


def monitor_records(
    recs: list[DiagnosticsRecord],
    consts: ConstantSet,
    tail_tol: float = 1e-6,
    cmp_tol: float = 1e-3,
    mono_tol: float = 1e-9,
    cutoff: float = 0.95,
) -> BlowupReport:
    """The blow-up verdict computed from a record stream alone."""
    if not recs:
        raise ValueError("no records to monitor")
    t = np.array([r.t for r in recs]) - recs[0].t
    h = np.array([r.h_value for r in recs], dtype=float)
    tf = np.array([r.tail_fraction for r in recs])
    n3 = np.array([r.norm_third for r in recs])

    n0 = math.sqrt(recs[0].norm_gamma_sq)
    margin = n0 / consts.m_gamma
    notes = []
    valid = margin > 1
    if not valid:
        notes.append(f"margin {margin:.6g} <= 1: ||u(0)||_gamma does not exceed M(gamma)")
        warnings.warn(notes[-1], RuntimeWarning)

    over = np.nonzero(tf > tail_tol)[0]
    horizon = float(t[over[0]]) if over.size else float(t[-1])

    if h[0] > 0:
        bound = RiccatiBound.from_h0(h[0], consts.c_riccati)
        t_star = bound.t_star
    else:
        bound, t_star = None, math.inf
        notes.append("H(0) = 0: no Riccati comparison possible")

    window = t <= min(horizon, cutoff * t_star)
    domination_ok = bound is not None
    if bound is not None:
        y = np.array([riccati_eval(bound, s) for s in t[window]])
        domination_ok = bool(np.all(h[window] >= y * (1 - cmp_tol)))

    in_h = t <= horizon
    hh = h[in_h]
    big = (hh[:-1] > consts.m_gamma**2) & (hh[1:] > consts.m_gamma**2)
    drops = hh[1:] - hh[:-1] < -mono_tol * hh[:-1]
    h_monotone_ok = not bool(np.any(big & drops))

    # integral form: H(t) - H(0) >= c int_0^t H^(3/2), trapezoid on the samples
    integral_ok = True
    if bound is not None and window.sum() >= 2:
        tw, hw = t[window], h[window]
        f = hw**1.5
        integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(tw) * (f[1:] + f[:-1]))])
        integral_ok = bool(np.all(consts.c_riccati * integ <= hw - hw[0] + cmp_tol * hw))

    return BlowupReport(
        consts=consts,
        initial_norm_gamma=n0,
        margin=margin,
        domination_ok=domination_ok and valid,
        horizon=horizon,
        h_monotone_ok=h_monotone_ok,
        t_star=t_star,
        integral_ok=integral_ok,
        max_norm_third=float(n3[in_h].max()),
        valid=valid,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# vector inequalities


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    ok: bool
    skipped: str | None = None


_RTOL = 1e-12
_TINY = 1e-300


@dataclass(frozen=True)
class BatchCheck:
    """One named check evaluated on a batch; ``lhs <= rhs + slack`` row-wise."""

    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    skipped: str | None = None

    @property
    def ok(self) -> np.ndarray:
        if self.skipped:
            return np.ones(self.lhs.shape, dtype=bool)
        return self.lhs <= self.rhs + self.slack

    def worst(self) -> Check:
        if self.skipped or self.lhs.size == 0:
            return Check(self.name, float("nan"), float("nan"), True, self.skipped)
        k = int(np.argmax(self.lhs - self.rhs - self.slack))
        return Check(self.name, float(self.lhs[k]), float(self.rhs[k]), bool(self.ok.all()))


def _wsq(U, lam, gamma):
    """Row-wise ||u||_gamma^2."""
    return (U * U) @ weights(lam, 2 * gamma, U.shape[1])


def inequality_batch(
    U, params: ModelParams, gamma: float, corrupt_c1: float | None = None
) -> list[BatchCheck]:
    """Evaluate every identity and inequality on each row of ``U``.

    Identities are reported as ``|difference| <= 1e-12 * scale``.  Checks
    outside their parameter range are marked ``skipped``; the pointwise
    inequalities and the H sandwich are skipped row-wise for rows with a
    negative entry (their lhs and rhs are set to 0 there).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m, n = U.shape
    p = params.with_modes(n) if params.n_modes != n else params
    lam, a = p.lam, p.alpha
    consts = constants(p, gamma, strict=False)
    cb = consts.c_b_impl
    out: list[BatchCheck] = []
    zeros = np.zeros(m)

    def ident(name, x, y, scale):
        d = np.abs(x - y)
        out.append(BatchCheck(name, d, zeros, _RTOL * scale + _TINY))

    def bound(name, lhs, rhs, skipped=None):
        if skipped:
            out.append(BatchCheck(name, zeros, zeros, zeros, skipped))
        else:
            out.append(BatchCheck(name, lhs, rhs, _RTOL * np.abs(rhs) + _TINY))

    lam_n = weights(lam, 1.0, n + 1)
    Um = np.zeros_like(U)
    Um[:, 1:] = U[:, :-1]
    Up = np.zeros_like(U)
    Up[:, :-1] = U[:, 1:]
    B = -lam_n[:-1] * Um * Um + lam_n[1:] * U * Up  # B(u, u) row-wise
    terms = np.abs(lam_n[:-1] * Um * Um * U).sum(1) + np.abs(lam_n[1:] * U * U * Up).sum(1)
    ident("orthogonality", np.einsum("ij,ij->i", B, U), zeros, terms)

    # (B(u,u), Au): scalar product against the closed form
    wa = weights(lam, 2 * a, n)
    inner_a = (B * U) @ wa
    pair = U[:, :-1] ** 2 * U[:, 1:]
    coef = weights(lam, 1 + 2 * a, n - 1) * lam * math.expm1(2 * a * p.log_lam) if n > 1 else np.zeros(0)
    closed_a = -(pair @ coef)
    ident("dual_path_b_au", closed_a, inner_a, np.abs(B * U) @ wa + np.abs(inner_a))

    if gamma > 0:
        wg = weights(lam, 2 * gamma, n)
        inner_g = (B * U) @ wg
        c1 = consts.c1 if corrupt_c1 is None else corrupt_c1
        closed_g = -c1 * (pair @ weights(lam, 1 + 2 * gamma, n - 1)) if n > 1 else zeros
        ident("c1_identity", closed_g, inner_g, np.abs(B * U) @ wg + np.abs(inner_g))
    else:
        bound("c1_identity", None, None, "needs gamma > 0")

    e = np.einsum("ij,ij->i", U, U)
    ens = (U * U) @ wa
    bound("poincare", e, lam ** (-2 * a) * ens)

    tb = np.abs(closed_a)
    n_a = np.sqrt(ens)
    au = np.sqrt(_wsq(U, lam, 2 * a))
    mid = (U * U) @ weights(lam, a + 1, n)
    bound("enstrophy_bound", tb, cb * n_a * mid)
    in_band = 1 / 3 - 1e-12 <= a <= 1 + 1e-12
    bound(
        "interpolated_bound",
        tb,
        cb * au ** (1 / a - 1) * n_a ** (4 - 1 / a) if in_band else None,
        None if in_band else "needs alpha in [1/3, 1]",
    )
    is3 = math.isclose(a, 1 / 3, rel_tol=1e-12)
    bound("bound_alpha_one_third", tb, cb * au**2 * n_a if is3 else None, None if is3 else "needs alpha = 1/3")
    is25 = math.isclose(a, 0.4, rel_tol=1e-12)
    bound("bound_alpha_two_fifths", tb, cb * (au * n_a) ** 1.5 if is25 else None,
          None if is25 else "needs alpha = 2/5")
    bound("bound_alpha_half", tb, cb * au * ens if a >= 0.5 else None, None if a >= 0.5 else "needs alpha >= 1/2")

    if a < 1 / 3 and 0 < gamma < 1 - 3 * a:
        cube = np.abs(U) ** 3 @ weights(lam, 1 + 2 * gamma, n)
        bound("cube_sum_lower_bound", consts.a_gamma * _wsq(U, lam, a + gamma) ** 1.5, cube)
    else:
        bound("cube_sum_lower_bound", None, None, "needs alpha < 1/3 and 0 < gamma < 1 - 3 alpha")

    # pointwise inequalities and the sandwich need nonnegative amplitudes
    nonneg = np.all(U >= 0, axis=1)[:, None]
    if not nonneg.any():
        for name in ("pointwise_ineq1", "pointwise_ineq2", "h_sandwich_lower", "h_sandwich_upper"):
            bound(name, None, None, "needs nonnegative amplitudes")
        return out
    x, y = U[:, :-1], U[:, 1:]
    lhs, rhs = np.where(nonneg, x * y * y, 0), np.where(nonneg, 0.5 * y**3 + 2 * x * x * y, 0)
    k = np.argmax(lhs - rhs, axis=1) if n > 1 else np.zeros(m, dtype=int)
    pick = np.arange(m)
    bound("pointwise_ineq1", lhs[pick, k] if n > 1 else zeros, rhs[pick, k] if n > 1 else zeros)
    if n > 2:
        x, y, z = U[:, :-2], U[:, 1:-1], U[:, 2:]
        lhs = np.where(nonneg, x * y * z, 0)
        rhs = np.where(nonneg, 0.5 * x * x * y + 0.25 * z**3 + y * y * z, 0)
        k = np.argmax(lhs - rhs, axis=1)
        bound("pointwise_ineq2", lhs[pick, k], rhs[pick, k])
    else:
        bound("pointwise_ineq2", zeros, zeros)
    if gamma > 0:
        ng2 = _wsq(U, lam, gamma)
        cross = (U[:, :-1] * U[:, 1:]) @ weights(lam, 2 * gamma, n - 1) if n > 1 else zeros
        h = ng2 + consts.c2 * cross
        keep = nonneg[:, 0]
        bound("h_sandwich_lower", np.where(keep, ng2, 0), np.where(keep, h, 0))
        bound("h_sandwich_upper", np.where(keep, h, 0), np.where(keep, (1 + consts.c2) * ng2, 0))
    else:
        bound("h_sandwich_lower", None, None, "needs gamma > 0")
        bound("h_sandwich_upper", None, None, "needs gamma > 0")
    return out


def inequality_suite(u, params: ModelParams, gamma: float, corrupt_c1: float | None = None) -> list[Check]:
    """Every vector identity and inequality evaluated on a single vector ``u``.

    Checks outside their parameter range come back with ``skipped`` set and
    ``ok=True``.  ``corrupt_c1`` replaces c1 in the pairing identity (fault
    injection for tests).
    """
    u = np.asarray(u, dtype=float)
    checks = inequality_batch(u[None, :], params, gamma, corrupt_c1)
    if np.any(u < 0):
        signed_only = ("pointwise_ineq1", "pointwise_ineq2", "h_sandwich_lower", "h_sandwich_upper")
        checks = [
            BatchCheck(c.name, c.lhs, c.rhs, c.slack, "needs nonnegative amplitudes") if c.name in signed_only else c
            for c in checks
        ]
    return [c.worst() for c in checks]


def sharpness_probe(n: int, ratio_ab: float, params: ModelParams) -> float:
    """|(B(u,u),Au)| / (c_b ||u|| sum lam^((alpha+1)m) u_m^2) for u = e_n + r e_{n+1}."""
    if n < 1 or ratio_ab < 0:
        raise ValueError("need n >= 1 and ratio_ab >= 0")
    p = params.with_modes(max(params.n_modes, n + 1))
    u = np.zeros(p.n_modes)
    u[n - 1] = 1.0
    u[n] = ratio_ab
    return attainment_ratio(u, p)


def attainment_ratio(u, params: ModelParams) -> float:
    u = np.asarray(u, dtype=float)
    p = params
    den = constants(p, 0.0, strict=False).c_b_impl * norm_gamma(u, p.alpha, p) * float(
        np.dot(weights(p.lam, p.alpha + 1, u.size), u * u)
    )
    return 0.0 if den == 0 else abs(trilinear_b_au(u, p)) / den


# ---------------------------------------------------------------------------
# growth fits


@dataclass(frozen=True)
class GrowthFit:
    t_star: float
    c: float
    quality: float


def fit_inverse_growth(t, values, window: int = 8) -> GrowthFit:
    """Least-squares fit of 1/values ~ (t_star - t)/c over the last ``window`` points.

    ``quality`` is the RMS residual of the fit relative to the spread of
    1/values; it is ~0 for data of the form c/(t_star - t).
    """
    t = np.asarray(t, dtype=float)[-window:]
    v = np.asarray(values, dtype=float)[-window:]
    if window < 8 or t.size < window:
        raise FitRejected(f"need at least 8 samples in the fit window, have {t.size}")
    if not np.all(np.diff(v) > 0):
        raise FitRejected("growth is not strictly monotone over the fit window")
    y = 1.0 / v
    slope, icpt = np.polyfit(t, y, 1)
    if not slope < 0:
        raise FitRejected("fitted 1/values is not decreasing")
    c = -1.0 / float(slope)
    resid = y - (slope * t + icpt)
    spread = y.max() - y.min()
    return GrowthFit(t_star=float(icpt * c), c=float(c), quality=float(np.sqrt(np.mean(resid**2)) / spread))


def growth_fit(traj: Trajectory, window: int = 8) -> GrowthFit:
    """Fit ||u(t)||^2 >= c/(t_star - t) to the last samples of a trajectory."""
    p = traj.params
    ens = [norm_gamma(u, p.alpha, p) ** 2 for u in traj.states]
    return fit_inverse_growth(traj.times, ens, window)
