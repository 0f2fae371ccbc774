"""Generic ODE integrators: accuracy, events, dense output, genericity."""

import math

import numpy as np
import pytest

from odesens.dual import seed_array, values
from odesens.models import get_model
from odesens.ode import (
    EventSpec,
    IntegratorConfig,
    ODEProblem,
    RetCode,
    interpolate,
    locate_event,
    solve,
    solve_explicit,
    solve_stiff,
)


def _decay_problem(u0=1.0):
    return ODEProblem(
        rhs=lambda u, p, t: np.array([-u[0]]),
        u0=np.array([float(u0)]),
        p=np.empty(0),
        t0=0.0,
        tf=1.0,
    )


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def test_config_rejects_bad_tolerances():
    with pytest.raises(ValueError):
        IntegratorConfig(abstol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(reltol=1.5)
    with pytest.raises(ValueError):
        IntegratorConfig(dtmin=1.0, dtmax=0.5)


# ---------------------------------------------------------------------------
# explicit method accuracy
# ---------------------------------------------------------------------------


def test_exponential_decay_endpoint():
    sol = solve_explicit(
        _decay_problem(), IntegratorConfig(reltol=1e-8, abstol=1e-8)
    )
    assert sol.retcode is RetCode.SUCCESS
    assert abs(sol.u_end[0] - math.exp(-1.0)) <= 1e-7


def test_zero_rhs_is_exact():
    prob = ODEProblem(
        rhs=lambda u, p, t: np.zeros(2),
        u0=np.array([3.25, -1.5]),
        p=np.empty(0),
        t0=0.0,
        tf=5.0,
    )
    sol = solve_explicit(prob, IntegratorConfig())
    for u in sol.us:
        assert np.array_equal(u, prob.u0)
    for t in np.linspace(0.0, 5.0, 17):
        assert np.array_equal(interpolate(sol, t), prob.u0)


def test_accepted_times_strictly_increase():
    lv = get_model("lv").problem
    sol = solve_explicit(lv, IntegratorConfig(reltol=1e-6, abstol=1e-8))
    assert sol.retcode is RetCode.SUCCESS
    assert np.all(np.diff(sol.ts) > 0.0)


def test_convergence_order_of_explicit_pair():
    tols = [1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10]
    errs, steps = [], []
    for tol in tols:
        sol = solve_explicit(
            _decay_problem(),
            IntegratorConfig(reltol=tol, abstol=tol, dense=False),
        )
        errs.append(abs(sol.u_end[0] - math.exp(-1.0)))
        steps.append(sol.stats.naccept)
    assert all(a > b for a, b in zip(errs, errs[1:]))
    # work-precision slope: error ~ (1/steps)^order
    order = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert order >= 4.5


# ---------------------------------------------------------------------------
# stiff method
# ---------------------------------------------------------------------------


def test_stiff_relaxation_to_forced_oscillation():
    lam = 1000.0

    def rhs(u, p, t):
        return np.array([-lam * (u[0] - np.cos(t))])

    prob = ODEProblem(rhs=rhs, u0=np.array([0.0]), p=np.empty(0),
                      t0=0.0, tf=1.0)
    sol = solve_stiff(prob, IntegratorConfig(reltol=1e-6, abstol=1e-6,
                                             stiff=True))
    assert sol.retcode is RetCode.SUCCESS
    assert sol.stats.naccept <= 500
    d = lam * lam + 1.0
    exact = (lam * lam * math.cos(1.0) + lam * math.sin(1.0)) / d - (
        lam * lam / d
    ) * math.exp(-lam)
    assert abs(sol.u_end[0] - exact) <= 1e-5


def test_stiff_diagonal_linear_decay():
    sol = solve_stiff(
        _decay_problem(), IntegratorConfig(reltol=1e-8, abstol=1e-10,
                                           stiff=True)
    )
    assert abs(sol.u_end[0] - math.exp(-1.0)) <= 1e-7


def test_stiff_kinetics_self_convergence():
    prob = get_model("pollu").problem
    coarse = solve_stiff(prob, IntegratorConfig(reltol=1e-6, abstol=1e-8,
                                                stiff=True, dense=False))
    fine = solve_stiff(prob, IntegratorConfig(reltol=1e-10, abstol=1e-12,
                                              stiff=True, dense=False))
    assert coarse.retcode is RetCode.SUCCESS
    assert fine.retcode is RetCode.SUCCESS
    assert np.max(np.abs(coarse.u_end - fine.u_end)) <= 1e-5


# ---------------------------------------------------------------------------
# failure retcodes
# ---------------------------------------------------------------------------


def test_step_budget_exhaustion():
    sol = solve_explicit(
        _decay_problem(),
        IntegratorConfig(reltol=1e-10, abstol=1e-12, max_steps=3),
    )
    assert sol.retcode is RetCode.MAXITERS


def test_step_underflow():
    sol = solve_explicit(
        _decay_problem(),
        IntegratorConfig(reltol=1e-10, abstol=1e-12, dtmin=0.25, dtmax=0.5),
    )
    assert sol.retcode is RetCode.DTMIN


def test_non_finite_state():
    def rhs(u, p, t):
        if t > 0.1:
            return np.array([float("nan")])
        return np.array([-u[0]])

    sol = solve_explicit(
        ODEProblem(rhs=rhs, u0=np.array([1.0]), p=np.empty(0),
                   t0=0.0, tf=1.0),
        IntegratorConfig(),
    )
    assert sol.retcode is RetCode.DOMAIN_ERROR


# ---------------------------------------------------------------------------
# dense output
# ---------------------------------------------------------------------------


def test_interpolation_reproduces_knots_exactly():
    lv = get_model("lv").problem
    sol = solve_explicit(lv, IntegratorConfig(reltol=1e-6, abstol=1e-8))
    for tk, uk in zip(sol.ts, sol.us):
        assert np.array_equal(interpolate(sol, tk), uk)


def test_interpolated_midpoints_track_analytic_decay():
    sol = solve_explicit(
        _decay_problem(), IntegratorConfig(reltol=1e-8, abstol=1e-8)
    )
    for a, b in zip(sol.ts, sol.ts[1:]):
        mid = 0.5 * (a + b)
        assert abs(interpolate(sol, mid)[0] - math.exp(-mid)) <= 1e-6


def test_interpolation_outside_span_raises():
    sol = solve_explicit(_decay_problem(), IntegratorConfig())
    with pytest.raises(ValueError):
        interpolate(sol, -0.5)
    with pytest.raises(ValueError):
        interpolate(sol, 1.5)


def test_dense_output_against_tight_reference():
    lv = get_model("lv").problem
    tol = 1e-6
    sol = solve_explicit(lv, IntegratorConfig(reltol=tol, abstol=tol))
    ref = solve_explicit(lv, IntegratorConfig(reltol=1e-12, abstol=1e-12))
    rng = np.random.default_rng(5)
    worst = 0.0
    for t in rng.uniform(lv.t0, lv.tf, 100):
        d = np.max(np.abs(interpolate(sol, t) - interpolate(ref, t)))
        worst = max(worst, d)
    assert worst <= 100.0 * tol


def test_saveat_grid_matches_interpolant():
    lv = get_model("lv").problem
    grid = np.linspace(0.0, 10.0, 23)
    sol = solve_explicit(lv, IntegratorConfig(reltol=1e-8, abstol=1e-10),
                         saveat=grid)
    t_saved, u_saved = sol.saved
    assert np.allclose(t_saved, grid)
    for t, u in zip(t_saved, u_saved):
        assert np.max(np.abs(u - interpolate(sol, t))) <= 1e-9


# ---------------------------------------------------------------------------
# event handling
# ---------------------------------------------------------------------------


def test_root_location_linear():
    assert locate_event(lambda t: 1.0 - 2.0 * t, (0.0, 1.0)) == pytest.approx(
        0.5, abs=1e-12
    )


def test_root_location_quadratic():
    got = locate_event(lambda t: t * t - 2.0, (1.0, 2.0))
    assert got == pytest.approx(math.sqrt(2.0), abs=1e-9)


def test_root_location_without_sign_change():
    assert locate_event(lambda t: t * t + 1.0, (0.0, 1.0)) is None


def test_controlled_switch_fires_at_crossing():
    spec = get_model("hybrid")  # x' = -a, y' = b; b zeroed when x hits 0
    sol = solve_explicit(spec.problem,
                         IntegratorConfig(reltol=1e-8, abstol=1e-10))
    assert sol.retcode is RetCode.SUCCESS
    assert sol.stats.nevents == 1
    t_star, which = sol.events[0]
    assert which == 0
    assert t_star == pytest.approx(0.5, abs=1e-8)
    assert sol.u_end[0] == pytest.approx(-1.0, abs=1e-7)
    assert sol.u_end[1] == pytest.approx(0.5, abs=1e-7)


def test_identity_effect_leaves_trajectory_unchanged():
    lv = get_model("lv").problem
    cfg = IntegratorConfig(reltol=1e-8, abstol=1e-10)
    plain = solve_explicit(lv, cfg)
    with_event = solve_explicit(
        # fires once, halfway through the span
        type(lv)(
            rhs=lv.rhs,
            u0=lv.u0,
            p=lv.p,
            t0=lv.t0,
            tf=lv.tf,
            events=(EventSpec(g=lambda u, p, t: t - 5.0,
                              effect=lambda u, p, t: (u, p)),),
        ),
        cfg,
    )
    assert with_event.stats.nevents == 1
    assert np.max(np.abs(with_event.u_end - plain.u_end)) <= 1e-6


def test_forced_stop_time_is_a_knot():
    import dataclasses

    lv = get_model("lv").problem
    sol = solve_explicit(
        dataclasses.replace(lv, tstops=(3.3,)), IntegratorConfig()
    )
    assert np.min(np.abs(sol.ts - 3.3)) <= 1e-12


def test_dose_schedule_applies_jumps():
    prob = get_model("pkpd").problem
    sol = solve_stiff(prob, IntegratorConfig(reltol=1e-6, abstol=1e-8,
                                             stiff=True))
    assert sol.retcode is RetCode.SUCCESS
    dose_times = [t for t, which in sol.events if which is None]
    assert len(dose_times) == 4
    assert np.allclose(sorted(dose_times), [24.0, 48.0, 72.0, 96.0])
    # the depot state jumps by the dose amount across each dose knot
    for td in dose_times:
        k = int(np.argmin(np.abs(sol.ts - td)))
        assert sol.ts[k] == pytest.approx(td, abs=1e-9)
        before = interpolate(sol, td - 1e-9)[0]  # pre-dose segment value
        after = sol.us[k][0]
        assert after - before == pytest.approx(100.0, abs=1e-3)


def test_solve_dispatches_on_stiff_flag():
    prob = _decay_problem()
    tsit = solve(prob, IntegratorConfig(stiff=False))
    rodas = solve(prob, IntegratorConfig(stiff=True))
    assert tsit.stats.njac == 0
    assert rodas.stats.njac > 0
    assert abs(tsit.u_end[0] - rodas.u_end[0]) <= 1e-4


# ---------------------------------------------------------------------------
# scalar genericity
# ---------------------------------------------------------------------------


def test_zero_seeded_duals_reproduce_float_solve_bitwise():
    lv = get_model("lv").problem
    cfg = IntegratorConfig(reltol=1e-6, abstol=1e-8)
    plain = solve_explicit(lv, cfg)
    dual_prob = type(lv)(
        rhs=lv.rhs,
        u0=seed_array(lv.u0, 1, [-1] * lv.u0.shape[0]),
        p=seed_array(lv.p, 1, [-1] * lv.p.shape[0]),
        t0=lv.t0,
        tf=lv.tf,
    )
    dual = solve_explicit(dual_prob, cfg)
    assert np.array_equal(dual.ts, plain.ts)
    for uk, dk in zip(plain.us, dual.us):
        assert np.array_equal(values(dk), uk)
