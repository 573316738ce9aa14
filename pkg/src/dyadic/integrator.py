"""Adaptive time stepping for the Galerkin system.

Two modes share the Dormand-Prince 5(4) tableau:

* ``explicit_embedded``: the classical pair applied to the full right-hand side.
* ``integrating_factor``: the affine diagonal part ``-L (u - u*)`` with
  ``L_n = nu lam^(2 alpha n)`` and ``u*_n = g_n / L_n`` is propagated exactly by
  ``exp(-L t)``; only the nonlinear term goes through the Runge-Kutta stages.
  Every exponent that appears is ``-L (c_i - c_j) h`` with ``c_i >= c_j``, so
  nothing overflows however stiff the tail modes are.

Both propagate the 5th order solution and use the embedded 4th order one for
the error estimate (p = 5).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NonFiniteStateError
from .model import ModelParams, State, bilinear_b, galerkin_rhs, norm_gamma, weights

ORDER = 5

# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BHAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _BHAT

EXPLICIT = "explicit_embedded"
INTEGRATING_FACTOR = "integrating_factor"
AUTO = "auto"


@dataclass(frozen=True)
class StepperConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    dt_init: float = 1e-6
    dt_min: float | None = None  # None -> 1e-12 * (t_end - t0)
    dt_max: float = math.inf
    max_steps: int = 1_000_000
    mode: str = AUTO
    disable_nonlinear: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.mode not in (AUTO, EXPLICIT, INTEGRATING_FACTOR):
            raise ConfigError(f"unknown stepper mode {self.mode!r}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        dt_min = self.dt_min if self.dt_min is not None else 0.0
        if self.dt_min is not None and not dt_min > 0:
            raise ConfigError("dt_min must be positive")
        if not (dt_min <= self.dt_init <= self.dt_max) or not self.dt_init > 0:
            raise ConfigError("need 0 < dt_min <= dt_init <= dt_max")

    def resolve_mode(self, params: ModelParams) -> str:
        """Integrating factor is the default for N > 24 or a stiff first step."""
        if self.mode != AUTO:
            return self.mode
        stiff = params.dissipation_rates[-1] * self.dt_init > 1
        return INTEGRATING_FACTOR if params.n_modes > 24 or stiff else EXPLICIT


@dataclass(frozen=True)
class EventSpec:
    kind: str  # norm_threshold | dt_floor | tail_fraction
    threshold: float
    gamma: float = 0.0
    tail_width: int = 5
    terminal: bool = True

    def __post_init__(self):
        if self.kind not in ("norm_threshold", "dt_floor", "tail_fraction"):
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if not self.threshold > 0:
            raise ConfigError("event threshold must be positive")
        if self.tail_width < 1:
            raise ConfigError("tail_width must be at least 1")

    def value(self, u: np.ndarray, params: ModelParams, dt: float) -> float:
        if self.kind == "norm_threshold":
            return norm_gamma(u, self.gamma, params)
        if self.kind == "tail_fraction":
            return tail_fraction(u, self.gamma, self.tail_width, params)
        return dt

    def triggered(self, value: float) -> bool:
        if self.kind == "dt_floor":
            return value < self.threshold
        return value > self.threshold if self.kind == "tail_fraction" else value >= self.threshold


def tail_fraction(u, gamma: float, tail_width: int, params: ModelParams) -> float:
    """Share of ||u||_gamma^2 carried by the top ``tail_width`` modes."""
    u = np.asarray(u, dtype=float)
    total = norm_gamma(u, gamma, params) ** 2
    if total == 0:
        return 0.0
    k = min(tail_width, u.size)
    top = np.zeros_like(u)
    top[-k:] = u[-k:]
    return min(1.0, norm_gamma(top, gamma, params) ** 2 / total)


@dataclass(frozen=True)
class EventHit:
    t: float
    spec: EventSpec
    value: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution.  ``integrals[name][k]`` is the integral of the named
    quadrature channel from the first sample time to ``times[k]``."""

    params: ModelParams
    times: np.ndarray
    states: np.ndarray
    events: tuple[EventHit, ...]
    status: str  # reached_t_end | event_stop | step_floor | max_steps
    integrals: dict = field(default_factory=dict)
    n_steps: int = 0
    n_rejected: int = 0
    mode: str = ""

    def __post_init__(self):
        for arr in (self.times, self.states, *self.integrals.values()):
            arr.flags.writeable = False

    def __len__(self):
        return self.times.size

    @property
    def samples(self) -> list[State]:
        return [State(t, u) for t, u in zip(self.times, self.states)]

    @property
    def final(self) -> State:
        return State(self.times[-1], self.states[-1])


# ---------------------------------------------------------------------------


def budget_quadrature(params: ModelParams):
    """Integrands of the energy budget: ||u||^2 and (g, u)."""
    rates = params.dissipation_rates / params.nu if params.nu > 0 else weights(
        params.lam, 2 * params.alpha, params.n_modes
    )
    g = params.g

    def q(u):
        return np.array([np.dot(rates * u, u), np.dot(g, u)])

    return ("enstrophy", "forcing_work"), q


class _Stepper:
    """One Dormand-Prince attempt, explicit or with integrating factor."""

    def __init__(self, params: ModelParams, cfg: StepperConfig, quad=None):
        self.params = params
        self.cfg = cfg
        self.mode = cfg.resolve_mode(params)
        self.quad = quad
        rates = np.array(params.dissipation_rates)
        g = params.g
        if self.mode == INTEGRATING_FACTOR:
            self.rates = rates
            stiff = rates > 0
            self.u_star = np.where(stiff, g / np.where(stiff, rates, 1.0), 0.0)
            # forcing on undamped modes stays in the stage function
            self.g_free = np.where(stiff, 0.0, g)
        self._nonlinear = not cfg.disable_nonlinear

    def stage(self, u: np.ndarray) -> np.ndarray:
        """Stage function: full RHS (explicit) or the non-diagonal part (IF)."""
        p = self.params
        if self.mode == EXPLICIT:
            return galerkin_rhs(u, p, nonlinear=self._nonlinear)
        out = self.g_free.copy() if self._nonlinear else self.g_free
        if self._nonlinear:
            out -= bilinear_b(u, u, p)
        return out

    def attempt(self, u0: np.ndarray, h: float, k1: np.ndarray, q1):
        """Return (u1, error_vector, k7, quad_increment, quad_error, q7)."""
        ks = [k1]
        qs = [q1] if self.quad is not None else None
        if self.mode == EXPLICIT:
            u = u0
            for i in range(1, 7):
                u = u0 + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
                ks.append(self.stage(u))
                if qs is not None:
                    qs.append(self.quad(u))
            u1 = u
            err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        else:
            rates, ustar = self.rates, self.u_star
            v0 = u0 - ustar
            cache = {}

            def decay(d):
                key = round(d, 15)
                if key not in cache:
                    cache[key] = np.exp(-rates * (d * h))
                return cache[key]

            u = u0
            for i in range(1, 7):
                ci = _C[i]
                acc = decay(ci) * v0
                for j, a in enumerate(_A[i]):
                    if a != 0.0:
                        acc = acc + (h * a) * decay(ci - _C[j]) * ks[j]
                u = ustar + acc
                ks.append(self.stage(u))
                if qs is not None:
                    qs.append(self.quad(u))
            u1 = u  # stage 7 sits at c = 1 with weights b
            err = h * sum(e * decay(1.0 - _C[j]) * ks[j] for j, e in enumerate(_E) if e != 0.0)
        if qs is None:
            return u1, err, ks[6], None, None, None
        dq = h * sum(b * q for b, q in zip(_B, qs) if b != 0.0)
        eq = h * sum(e * q for e, q in zip(_E, qs) if e != 0.0)
        return u1, err, ks[6], dq, eq, qs[6]


def _error_norm(err, u0, u1, rel_tol, abs_tol) -> float:
    scale = np.maximum(rel_tol * np.maximum(np.abs(u0), np.abs(u1)), abs_tol)
    r = err / scale
    return math.sqrt(float(np.dot(r, r)) / r.size) if r.size else 0.0


def step(s: State, dt: float, params: ModelParams, cfg: StepperConfig) -> tuple[State, float]:
    """One step of size ``dt``; returns the new state and the scaled error estimate."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0 = np.asarray(s.u, dtype=float)
    if u0.size != params.n_modes:
        from .errors import DimensionError

        raise DimensionError(f"state has {u0.size} modes, model has {params.n_modes}")
    st = _Stepper(params, cfg)
    u1, err, *_ = st.attempt(u0, dt, st.stage(u0), None)
    if not np.all(np.isfinite(u1)):
        raise NonFiniteStateError(f"non-finite state after step of size {dt} from t={s.t}")
    return State(s.t + dt, u1), _error_norm(err, u0, u1, cfg.rel_tol, cfg.abs_tol)


def integrate(
    s0: State,
    t_end: float,
    params: ModelParams,
    cfg: StepperConfig = StepperConfig(),
    events: Sequence[EventSpec] = (),
    sample_every: float | None = None,
    quadrature: tuple[Sequence[str], Callable] | None = None,
    control_quadrature: bool = True,
) -> Trajectory:
    """Adaptive integration from ``s0`` to ``t_end``.

    Samples are emitted every ``sample_every`` time units (steps are shortened
    to land on them) or after every accepted step when ``sample_every`` is None,
    and always at termination.  ``quadrature`` is ``(names, f)`` with ``f(u)``
    returning one value per name; those integrands are integrated with the same
    stages as the state and, unless ``control_quadrature`` is false, included
    in the error control.  The energy-budget integrands are always carried.
    Resolving them forces steps of order 1/(nu lam^(2 alpha n)) while mode n
    carries energy, so rough data on many modes wants ``control_quadrature=False``.
    """
    t0 = float(s0.t)
    if not t_end > t0:
        raise ConfigError(f"t_end={t_end} must exceed the initial time {t0}")
    u = np.array(s0.u, dtype=float)
    if u.size != params.n_modes:
        from .errors import DimensionError

        raise DimensionError(f"state has {u.size} modes, model has {params.n_modes}")
    if not np.all(np.isfinite(u)):
        raise NonFiniteStateError("initial state is not finite")
    if sample_every is not None and not sample_every > 0:
        raise ConfigError("sample_every must be positive or None")
    dt_min = cfg.dt_min if cfg.dt_min is not None else 1e-12 * (t_end - t0)
    if dt_min > cfg.dt_init:
        raise ConfigError(f"dt_min={dt_min} exceeds dt_init={cfg.dt_init}")

    names, qf = budget_quadrature(params)
    if quadrature is not None:
        extra_names, extra_f = quadrature
        names = tuple(names) + tuple(extra_names)
        base = qf

        def qf(v, base=base, extra_f=extra_f):
            return np.concatenate([base(v), np.atleast_1d(extra_f(v))])

    st = _Stepper(params, cfg, qf)
    rel, atol = cfg.rel_tol, cfg.abs_tol

    times, states, qrows = [t0], [u.copy()], []
    Q = np.zeros(len(names))
    qrows.append(Q.copy())
    hits: list[EventHit] = []
    fired: set[int] = set()

    def check_events(tt, uu, dt):
        stop = False
        for idx, ev in enumerate(events):
            if idx in fired:
                continue
            val = ev.value(uu, params, dt)
            if ev.triggered(val):
                fired.add(idx)
                hits.append(EventHit(tt, ev, float(val)))
                stop = stop or ev.terminal
        return stop

    status = None
    if check_events(t0, u, cfg.dt_init):
        status = "event_stop"

    # compensated time so steps far below ulp(t) still accumulate
    t_hi, t_lo = t0, 0.0
    next_sample = t0 + sample_every if sample_every else None
    h = min(cfg.dt_init, cfg.dt_max)
    k1 = st.stage(u)
    q1 = qf(u)
    n_steps = n_rej = 0

    while status is None:
        if n_steps >= cfg.max_steps:
            status = "max_steps"
            break
        target = t_end if next_sample is None else min(t_end, next_sample)
        remaining = (target - t_hi) - t_lo
        if remaining <= 0:
            t_hi, t_lo, remaining = target, 0.0, 0.0
        clipped = h >= remaining
        h_try = remaining if clipped else h
        u1, err_vec, k7, dq, eq, q7 = st.attempt(u, h_try, k1, q1)
        if np.all(np.isfinite(u1)):
            err = _error_norm(err_vec, u, u1, rel, atol)
            if control_quadrature and eq is not None and eq.size:
                qs = np.maximum(rel * np.maximum(np.abs(Q), np.abs(Q + dq)), atol)
                qerr = math.sqrt(float(np.mean((eq / qs) ** 2)))
                err = math.sqrt((err**2 * u.size + qerr**2 * eq.size) / (u.size + eq.size))
        else:
            err = math.inf
        if not err <= 1.0:
            n_rej += 1
            fac = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** (-1 / ORDER))
            h = min(h_try, h) * fac
            if h < dt_min:
                status = "step_floor"
            continue

        # accept
        n_steps += 1
        y = h_try + t_lo
        t_new = t_hi + y
        t_lo = y - (t_new - t_hi)
        t_hi = t_new
        if clipped:
            t_hi, t_lo = target, 0.0
        u, k1, q1 = u1, k7, q7
        Q = Q + dq
        t_cur = t_hi + t_lo

        fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-1 / ORDER)))
        # a step shortened to hit a sample time says little about the next one
        h = min(max(h, h_try * fac) if clipped else h_try * fac, cfg.dt_max)

        sampled = False
        if next_sample is None or (clipped and target == next_sample):
            times.append(t_cur)
            states.append(u.copy())
            qrows.append(Q.copy())
            sampled = True
            if next_sample is not None:
                next_sample = t0 + sample_every * (round((next_sample - t0) / sample_every) + 1)
        if clipped and target == t_end:
            status = "reached_t_end"
        if check_events(t_cur, u, h_try):
            status = "event_stop"
        if status is not None and not sampled:
            times.append(t_cur)
            states.append(u.copy())
            qrows.append(Q.copy())

    if status in ("step_floor", "max_steps") and times[-1] != t_hi + t_lo:
        times.append(t_hi + t_lo)
        states.append(u.copy())
        qrows.append(Q.copy())
    if status == "step_floor":
        warnings.warn(f"step size fell below dt_min={dt_min:g} at t={t_hi + t_lo!r}", RuntimeWarning)

    # sample times must be strictly increasing; near-coincident tails collapse in float64
    times_a = np.array(times)
    keep = np.concatenate([[True], np.diff(times_a) > 0])
    keep[-1] = True
    if not keep.all():
        # keep the latest state for a repeated time stamp
        idx = [i for i in range(len(times)) if i == len(times) - 1 or times[i + 1] > times[i]]
        keep = np.zeros(len(times), dtype=bool)
        keep[idx] = True
    qarr = np.array(qrows)
    return Trajectory(
        params=params,
        times=times_a[keep],
        states=np.array(states)[keep],
        events=tuple(hits),
        status=status,
        integrals={name: qarr[keep, i].copy() for i, name in enumerate(names)},
        n_steps=n_steps,
        n_rejected=n_rej,
        mode=st.mode,
    )


def integrate_fixed(s0: State, t_end: float, n_steps: int, params: ModelParams, cfg: StepperConfig) -> State:
    """Take ``n_steps`` equal steps without error control (for order studies)."""
    st = _Stepper(params, cfg)
    u = np.array(s0.u, dtype=float)
    h = (t_end - s0.t) / n_steps
    k = st.stage(u)
    for _ in range(n_steps):
        u, _, k, *_ = st.attempt(u, h, k, None)
        if not np.all(np.isfinite(u)):
            raise NonFiniteStateError("non-finite state in fixed-step run")
    return State(t_end, u)


def positivity_floor(traj: Trajectory) -> float:
    """Minimum amplitude over all samples and modes."""
    if traj.states.size == 0:
        return 0.0
    if np.any(traj.states[0] < 0):
        warnings.warn("initial data has negative entries; positivity is not expected", RuntimeWarning)
    return float(traj.states.min())
