import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic.errors import ConfigError, DimensionError, NonFiniteStateError
from dyadic.integrator import (
    EXPLICIT,
    INTEGRATING_FACTOR,
    ORDER,
    EventSpec,
    StepperConfig,
    integrate,
    integrate_fixed,
    positivity_floor,
    step,
    tail_fraction,
)
from dyadic.model import ModelParams, State, energy


def linear_exact(u0, p, t):
    r = p.dissipation_rates
    return u0 * np.exp(-r * t) - p.g / r * np.expm1(-r * t)


def test_config_validation():
    with pytest.raises(ConfigError):
        StepperConfig(rel_tol=0)
    with pytest.raises(ConfigError):
        StepperConfig(mode="implicit")
    with pytest.raises(ConfigError):
        StepperConfig(dt_min=1e-3, dt_init=1e-4)
    with pytest.raises(ConfigError):
        StepperConfig(dt_init=1.0, dt_max=0.1)
    with pytest.raises(ConfigError):
        EventSpec("tail_fraction", 0.0)
    with pytest.raises(ConfigError):
        EventSpec("tail_fraction", 1e-6, tail_width=0)


def test_mode_resolution():
    cfg = StepperConfig()
    assert cfg.resolve_mode(ModelParams(n_modes=8)) == EXPLICIT
    assert cfg.resolve_mode(ModelParams(n_modes=25)) == INTEGRATING_FACTOR
    # nu lam^(2 alpha N) dt_init > 1 forces the integrating factor even for small N
    assert StepperConfig(dt_init=0.5).resolve_mode(ModelParams(n_modes=4)) == INTEGRATING_FACTOR


@pytest.mark.parametrize("g1", [0.0, 3.0])
def test_integrating_factor_exact_on_linear_problem(g1):
    p = ModelParams(alpha=0.5, force=(g1, 0.5), n_modes=40)
    u0 = np.linspace(1.0, 0.1, 40)
    cfg = StepperConfig(mode=INTEGRATING_FACTOR, disable_nonlinear=True, rel_tol=1e-6)
    for t in (1e-3, 0.3, 10.0):
        # rough data on 40 modes: the budget integrands have 1e-12 transients
        tr = integrate(State(0.0, u0), t, p, cfg, control_quadrature=False)
        exact = linear_exact(u0, p, t)
        err = np.abs(tr.final.u - exact)
        assert np.all(err <= 1e-12 * np.abs(exact) + 1e-300)


def test_explicit_linear_decay_within_tolerance():
    rel = 1e-8
    p = ModelParams(alpha=0.5, force=(0.0,), n_modes=3)
    u0 = np.array([0.0, 1.0, 0.0])
    tr = integrate(State(0.0, u0), 10.0, p, StepperConfig(mode=EXPLICIT, disable_nonlinear=True, rel_tol=rel,
                                                         abs_tol=1e-20), sample_every=0.5)
    exact = np.exp(-4.0 * tr.times)
    # measured against the initial amplitude: the solution spans 17 decades
    assert np.all(np.abs(tr.states[:, 1] - exact) <= 10 * rel * abs(u0[1]))


def test_single_step_oracle():
    p = ModelParams(alpha=0.5, force=(0.0,), n_modes=3)
    s = State(0.0, [0.0, 0.0, 1.0])
    cfg = StepperConfig(mode=INTEGRATING_FACTOR, disable_nonlinear=True)
    s1, err = step(s, 0.01, p, cfg)
    assert s1.t == 0.01 and s1.u[2] == pytest.approx(math.exp(-0.08), rel=1e-15)
    assert err < 1e-12


def test_zero_state_stays_zero():
    p = ModelParams(force=(0.0,), n_modes=10)
    for mode in (EXPLICIT, INTEGRATING_FACTOR):
        tr = integrate(State(0.0, np.zeros(10)), 1.0, p, StepperConfig(mode=mode))
        assert np.all(tr.states == 0)


@pytest.mark.parametrize("mode", [EXPLICIT, INTEGRATING_FACTOR])
def test_inviscid_energy_conservation(mode):
    rel = 1e-9
    p = ModelParams(nu=0.0, alpha=0.5, force=(0.0,), n_modes=16)
    u0 = np.exp2(-np.arange(1.0, 17.0))
    tr = integrate(State(0.0, u0), 1.0, p, StepperConfig(rel_tol=rel, abs_tol=1e-20, mode=mode))
    e = np.einsum("ij,ij->i", tr.states, tr.states)
    assert np.max(np.abs(e - e[0])) <= 100 * rel * e[0]


def test_inviscid_single_step_energy_change_is_high_order():
    p = ModelParams(nu=0.0, alpha=0.5, force=(0.0,), n_modes=8)
    u0 = np.exp2(-np.arange(1.0, 9.0))
    cfg = StepperConfig(mode=EXPLICIT)
    drift = [abs(energy(step(State(0, u0), h, p, cfg)[0].u) - energy(u0)) for h in (0.02, 0.01)]
    assert math.log2(drift[0] / drift[1]) >= ORDER + 1 - 0.5


def observed_order(mode, n_modes, counts, t_end=0.5):
    p = ModelParams(alpha=0.5, force=(1.0,), n_modes=n_modes)
    u0 = np.exp2(-np.arange(1.0, n_modes + 1))
    cfg = StepperConfig(mode=mode)
    ref = integrate_fixed(State(0.0, u0), t_end, 4096, p, cfg).u
    errs = [np.max(np.abs(integrate_fixed(State(0.0, u0), t_end, n, p, cfg).u - ref)) for n in counts]
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


@pytest.mark.parametrize("mode", [EXPLICIT, INTEGRATING_FACTOR])
def test_convergence_order(mode):
    # explicit steps must sit inside the stability region; the integrating
    # factor reaches round-off beyond 64 steps
    if mode == EXPLICIT:
        orders = observed_order(mode, 8, (64, 128, 256))
    else:
        orders = observed_order(mode, 16, (16, 32, 64))
    assert min(orders) >= ORDER - 0.5


def test_tolerance_reduces_error():
    p = ModelParams(alpha=0.5, force=(1.0,), n_modes=16)
    u0 = np.exp2(-np.arange(1.0, 17.0))
    s0 = State(0.0, u0)
    ref = integrate(s0, 1.0, p, StepperConfig(rel_tol=1e-13, abs_tol=1e-16)).final.u
    errs = []
    for rel in (1e-6, 1e-8):
        got = integrate(s0, 1.0, p, StepperConfig(rel_tol=rel, abs_tol=rel * 1e-4)).final.u
        errs.append(np.max(np.abs(got - ref)))
    assert errs[1] < errs[0]


def test_norm_event_triggers_at_start():
    p = ModelParams(n_modes=4)
    s0 = State(0.5, [1.0, 0.0, 0.0, 0.0])
    tr = integrate(s0, 2.0, p, events=[EventSpec("norm_threshold", 0.5, gamma=0.0)])
    assert tr.status == "event_stop" and tr.events[0].t == 0.5 and len(tr) == 1


def test_norm_event_stops_growth():
    p = ModelParams(force=(5.0,), n_modes=6)
    tr = integrate(State(0.0, np.zeros(6)), 10.0, p, events=[EventSpec("norm_threshold", 1.0)])
    assert tr.status == "event_stop"
    assert tr.events[0].value >= 1.0 and tr.times[-1] < 10.0


def test_step_floor_status_warns():
    p = ModelParams(alpha=0.5, force=(0.0,), n_modes=8)
    u0 = 1e4 * np.exp2(-np.arange(1.0, 9.0))
    cfg = StepperConfig(mode=EXPLICIT, rel_tol=1e-12, abs_tol=1e-14, dt_init=1e-3, dt_min=1e-4)
    with pytest.warns(RuntimeWarning, match="dt_min"):
        tr = integrate(State(0.0, u0), 1.0, p, cfg)
    assert tr.status == "step_floor"


def test_max_steps_status():
    tr = integrate(State(0.0, np.ones(4)), 10.0, ModelParams(n_modes=4), StepperConfig(max_steps=3))
    assert tr.status == "max_steps" and tr.n_steps == 3


def test_non_finite_step():
    p = ModelParams(alpha=0.5, force=(0.0,), n_modes=4)
    with pytest.raises(NonFiniteStateError), np.errstate(over="ignore", invalid="ignore"):
        step(State(0.0, [1e200, 1e200, 1e200, 1e200]), 1.0, p, StepperConfig(mode=EXPLICIT))


def test_dimension_and_time_errors():
    p = ModelParams(n_modes=4)
    with pytest.raises(DimensionError):
        integrate(State(0.0, np.zeros(3)), 1.0, p)
    with pytest.raises(ConfigError):
        integrate(State(1.0, np.zeros(4)), 1.0, p)
    with pytest.raises(ValueError):
        step(State(0.0, np.zeros(4)), 0.0, p, StepperConfig())


def test_sampling_cadence_and_monotone_times():
    p = ModelParams(n_modes=8)
    tr = integrate(State(0.0, np.exp2(-np.arange(1.0, 9.0))), 1.0, p, sample_every=0.1)
    np.testing.assert_allclose(tr.times, np.linspace(0, 1, 11), rtol=0, atol=1e-14)
    assert tr.status == "reached_t_end"
    tr = integrate(State(0.0, np.exp2(-np.arange(1.0, 9.0))), 1.0, p)
    assert np.all(np.diff(tr.times) > 0) and tr.times[-1] == 1.0


def test_tiny_steps_accumulate_in_time():
    # steps far below ulp(t) must still advance time
    p = ModelParams(force=(0.0,), n_modes=2)
    cfg = StepperConfig(dt_init=1e-17, dt_max=1e-17, dt_min=1e-18, max_steps=1000)
    tr = integrate(State(1.0, [0.0, 0.0]), 2.0, p, cfg, sample_every=None)
    # 1000 steps of 1e-17 = 1e-14: two ulps of 1.0 after rounding
    assert tr.times[-1] > 1.0


def test_determinism():
    p = ModelParams(alpha=0.3, n_modes=30)
    u0 = np.exp2(-0.5 * np.arange(1.0, 31.0))
    ev = [EventSpec("tail_fraction", 1e-3, gamma=0.1)]
    a = integrate(State(0.0, u0), 0.5, p, events=ev)
    b = integrate(State(0.0, u0), 0.5, p, events=ev)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    assert a.status == b.status and a.events == b.events


def test_trajectory_is_immutable():
    tr = integrate(State(0.0, np.ones(3)), 0.1, ModelParams(n_modes=3))
    with pytest.raises(ValueError):
        tr.states[0, 0] = 5.0


def test_quadrature_channels_match_exact_integrals():
    # linear decay: int_0^T u_1^2 dt is known in closed form
    p = ModelParams(alpha=0.5, force=(0.0,), n_modes=1)
    cfg = StepperConfig(disable_nonlinear=True, rel_tol=1e-10, abs_tol=1e-16)
    tr = integrate(State(0.0, [1.0]), 2.0, p, cfg, quadrature=(("u2",), lambda u: u[0] ** 2))
    exact = (1 - math.exp(-8.0)) / 4
    assert tr.integrals["u2"][-1] == pytest.approx(exact, rel=1e-9)


def test_tail_fraction():
    p = ModelParams(n_modes=10)
    assert tail_fraction(np.zeros(10), 0.1, 5, p) == 0
    u = np.zeros(10)
    u[0] = 1.0
    assert tail_fraction(u, 0.1, 5, p) == 0
    assert tail_fraction(np.ones(10), 0.0, 10, p) == 1.0


# -- positivity


def test_positivity_zero_data_forced():
    p = ModelParams(alpha=0.5, force=(1.0,), n_modes=10)
    tr = integrate(State(0.0, np.zeros(10)), 2.0, p, StepperConfig(rel_tol=1e-10, abs_tol=1e-14))
    assert positivity_floor(tr) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 2**31), st.sampled_from([0.25, 0.5]))
def test_positivity_random_data(seed, alpha):
    rng = np.random.default_rng(seed)
    u0 = rng.random(24) * np.exp2(-np.arange(1.0, 25.0))
    p = ModelParams(alpha=alpha, n_modes=24)
    tr = integrate(State(0.0, u0), 1.0, p, StepperConfig(rel_tol=1e-10, abs_tol=1e-14))
    assert positivity_floor(tr) >= -1e-10


def test_positivity_reports_negative_data():
    p = ModelParams(n_modes=3)
    tr = integrate(State(0.0, [-0.5, 0.1, 0.0]), 0.1, p)
    with pytest.warns(RuntimeWarning, match="negative"):
        floor = positivity_floor(tr)
    assert floor == pytest.approx(min(-0.5, tr.states.min()))
