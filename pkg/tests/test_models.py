"""Benchmark problems: dimensions, hand-computed RHS values, defaults."""

import numpy as np
import pytest

from odesens.dual import seed_array, values
from odesens.models import bruss_forcing, get_model, model_names
from odesens.ode import IntegratorConfig, RetCode, solve_explicit

ALL_NAMES = ("lv", "bruss", "pollu", "pkpd", "hybrid")


def test_registry_contains_all_models():
    assert set(ALL_NAMES) <= set(model_names())
    with pytest.raises(KeyError):
        get_model("no-such-model")


# ---------------------------------------------------------------------------
# predator-prey (non-stiff, 2 states / 3 params)
# ---------------------------------------------------------------------------


def test_lv_shape_and_defaults():
    spec = get_model("lv")
    assert (spec.n_states, spec.n_params) == (2, 3)
    assert np.array_equal(spec.problem.u0, [1.0, 1.0])
    assert np.array_equal(spec.true_params, [1.5, 1.0, 3.0])
    assert spec.default_tspan == (0.0, 10.0)
    assert spec.recommended_solver == "explicit"
    assert spec.estimation_defaults.n_data_points == 100
    guess = spec.estimation_defaults.initial_guess_rule(spec.true_params)
    assert np.allclose(guess, 0.8 * spec.true_params)


def test_lv_rhs_and_jacobian_at_start():
    spec = get_model("lv")
    prob = spec.problem
    assert np.allclose(prob.rhs(prob.u0, prob.p, 0.0), [0.5, -2.0],
                       atol=1e-15)
    J = spec.analytic_jacobian(prob.u0, prob.p, 0.0)
    assert np.allclose(J, [[0.5, -1.0], [1.0, -2.0]], atol=1e-15)


# ---------------------------------------------------------------------------
# reaction-diffusion grid (stiff, 2N^2 states / 4N^2 params)
# ---------------------------------------------------------------------------


def test_bruss_dimensions_scale_with_grid():
    for n in (2, 3, 5):
        spec = get_model("bruss", N=n)
        assert (spec.n_states, spec.n_params) == (2 * n * n, 4 * n * n)
    with pytest.raises(ValueError):
        get_model("bruss", N=1)


def test_bruss_uniform_parameter_fields():
    spec = get_model("bruss", N=3)
    p = spec.problem.p
    nn = 9
    assert np.all(p[0:nn] == 3.4)
    assert np.all(p[nn:2 * nn] == 1.0)
    assert np.all(p[2 * nn:3 * nn] == 10.0)
    assert np.all(p[3 * nn:4 * nn] == 10.0)


def test_bruss_initial_profiles_on_the_grid():
    # N=3 grid nodes at {0, 1/2, 1}; profile 22*(y(1-y))^1.5 peaks mid-grid
    spec = get_model("bruss", N=3)
    u0 = spec.problem.u0
    center = 1 * 3 + 1
    assert u0[center] == pytest.approx(22.0 * 0.25**1.5, abs=1e-14)
    assert u0[9 + center] == pytest.approx(27.0 * 0.25**1.5, abs=1e-14)
    # boundary nodes with y in {0,1} start at zero for the u-field
    assert u0[0] == 0.0 and u0[2] == 0.0


def test_bruss_forcing_switch():
    assert bruss_forcing(0.3, 0.6, 2.0) == 5.0
    assert bruss_forcing(0.3, 0.6, 1.0) == 0.0
    assert bruss_forcing(0.9, 0.1, 2.0) == 0.0


def test_bruss_diffusion_of_constant_field_vanishes():
    spec = get_model("bruss", N=4)
    nn = 16
    cu, cv = 1.3, 0.7
    u = np.concatenate([np.full(nn, cu), np.full(nn, cv)])
    p = spec.problem.p
    got = spec.problem.rhs(u, p, 0.0)
    # with zero diffusion the RHS reduces to the pointwise reaction terms
    a, b = 3.4, 1.0
    du = b + cu * cu * cv - (a + 1.0) * cu
    dv = a * cu - cu * cu * cv
    assert np.allclose(got[:nn], du, atol=1e-13)
    assert np.allclose(got[nn:], dv, atol=1e-13)


# ---------------------------------------------------------------------------
# atmospheric kinetics (stiff, 20 states / 25 params)
# ---------------------------------------------------------------------------


def test_pollu_dimensions_and_defaults():
    spec = get_model("pollu")
    assert (spec.n_states, spec.n_params) == (20, 25)
    assert spec.recommended_solver == "stiff"
    assert spec.estimation_defaults.n_data_points == 10
    guess = spec.estimation_defaults.initial_guess_rule(spec.true_params)
    assert np.allclose(guess, 0.9 * spec.true_params)


def test_pollu_hand_evaluated_rates_at_start():
    prob = get_model("pollu").problem
    du = prob.rhs(prob.u0, prob.p, 0.0)
    # species 12 is produced only via u11, which starts at zero
    assert du[11] == 0.0
    # species 2: every term but -26.6*u2*u4 vanishes at the start
    assert du[1] == pytest.approx(-26.6 * 0.2 * 0.04, abs=1e-12)


# ---------------------------------------------------------------------------
# drug kinetics/response (non-stiff, 5 states / 14 params, scheduled doses)
# ---------------------------------------------------------------------------


def test_pkpd_dimensions_and_defaults():
    spec = get_model("pkpd")
    assert (spec.n_states, spec.n_params) == (5, 14)
    assert np.array_equal(spec.problem.u0, [100.0, 0.0, 0.0, 0.0, 5.0])
    assert spec.recommended_solver == "explicit"
    assert spec.estimation_defaults.n_data_points == 41
    guess = spec.estimation_defaults.initial_guess_rule(spec.true_params)
    assert np.allclose(guess, 0.95 * spec.true_params + 0.001)


def test_pkpd_baseline_rates():
    prob = get_model("pkpd").problem
    du = prob.rhs(prob.u0, prob.p, 0.0)
    assert du[0] == pytest.approx(-100.0, abs=1e-12)  # -ka * Depot
    assert du[4] == pytest.approx(0.0, abs=1e-12)  # kin balances kout*Resp


def test_pkpd_saturable_elimination_off_by_default():
    spec = get_model("pkpd")
    prob = spec.problem
    assert prob.p[7] == 0.0  # Vmax
    u = np.array([50.0, 10.0, 3.0, 1.0, 4.0])

    def rhs_without_mm(u, p, t):
        # same mass balance with the saturable pathway deleted
        depot, cent, per1, per2, resp = u
        ka, cl, vc, q1, q2 = p[0], p[1], p[2], p[3], p[4]
        vp1, vp2 = p[5], p[6]
        kin, imax, ic50, kout, gam = p[9], p[10], p[11], p[12], p[13]
        conc = cent / vc
        cg = conc**gam
        return np.array([
            -ka * depot,
            ka * depot - (cl + q1) * conc + q1 * (per1 / vp1)
            - q2 * conc + q2 * (per2 / vp2),
            q1 * conc - q1 * (per1 / vp1),
            q2 * conc - q2 * (per2 / vp2),
            kin * (1.0 - imax * cg / (ic50**gam + cg)) - kout * resp,
        ])

    assert np.allclose(prob.rhs(u, prob.p, 0.0),
                       rhs_without_mm(u, prob.p, 0.0), atol=1e-13)


def test_pkpd_dose_schedule_present():
    prob = get_model("pkpd").problem
    assert len(prob.time_events) == 1
    assert tuple(prob.time_events[0].times) == (24.0, 48.0, 72.0, 96.0)


# ---------------------------------------------------------------------------
# controlled switch problem (2 states / 2 params, known solution)
# ---------------------------------------------------------------------------


def test_hybrid_validates_parameters():
    with pytest.raises(ValueError):
        get_model("hybrid", a=-1.0)
    with pytest.raises(ValueError):
        get_model("hybrid", b=0.0)


def test_hybrid_known_endpoint():
    spec = get_model("hybrid")  # a=2, b=1
    sol = solve_explicit(spec.problem,
                         IntegratorConfig(reltol=1e-9, abstol=1e-11))
    assert sol.retcode is RetCode.SUCCESS
    assert sol.u_end[0] == pytest.approx(-1.0, abs=1e-8)
    assert sol.u_end[1] == pytest.approx(0.5, abs=1e-8)
    exact = spec.analytic_solution(spec.true_params, 1.0)
    assert np.allclose(sol.u_end, exact, atol=1e-8)


def test_hybrid_analytic_sensitivity_at_endpoint():
    spec = get_model("hybrid")
    S = np.asarray(spec.analytic_sensitivity(spec.true_params, 1.0))
    assert np.allclose(S, [[-1.0, 0.0], [-0.25, 0.5]], atol=1e-15)


def test_hybrid_crossing_at_final_time():
    spec = get_model("hybrid", a=1.0, b=1.0)  # switch lands exactly on tf
    sol = solve_explicit(spec.problem,
                         IntegratorConfig(reltol=1e-9, abstol=1e-11))
    assert sol.u_end[0] == pytest.approx(0.0, abs=1e-8)
    assert sol.u_end[1] == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------------------
# genericity of every RHS
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ALL_NAMES)
def test_rhs_identical_under_zero_seeded_duals(name):
    kwargs = {"N": 3} if name == "bruss" else {}
    prob = get_model(name, **kwargs).problem
    t = 0.5
    plain = np.asarray(prob.rhs(prob.u0, prob.p, t), dtype=float)
    du = seed_array(prob.u0, 1, [-1] * prob.u0.shape[0])
    dp = seed_array(prob.p, 1, [-1] * prob.p.shape[0])
    dual = values(prob.rhs(du, dp, t))
    scale = np.maximum(1.0, np.abs(plain))
    assert np.all(np.abs(dual - plain) <= 1e-14 * scale)
