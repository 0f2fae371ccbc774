"""Gauss-Kronrod quadrature: exactness, adaptivity, error-estimate quality."""

import math
import re

import numpy as np
import pytest
from scipy.special import i0

from odesens.quad import QuadratureError, QuadResult, adaptive, gk15


# ---------------------------------------------------------------------------
# single-panel rule
# ---------------------------------------------------------------------------


def test_monomial_square():
    res = gk15(lambda x: x * x, 0.0, 1.0)
    assert res.value == pytest.approx(1.0 / 3.0, abs=5e-16)
    assert res.nevals == 15


def test_constant_integrand():
    res = gk15(lambda x: 4.25, 0.0, 2.0)
    assert res.value == pytest.approx(8.5, abs=1e-14)
    assert res.error >= 0.0


def test_degree_22_polynomial_is_exact():
    rng = np.random.default_rng(3)
    coeffs = rng.uniform(-2.0, 2.0, 23)  # c0..c22
    closed_form = sum(c / (k + 1.0) for k, c in enumerate(coeffs))

    def poly(x):
        return sum(c * x**k for k, c in enumerate(coeffs))

    res = gk15(poly, 0.0, 1.0)
    assert res.value == pytest.approx(closed_form, rel=1e-13)
    mono = gk15(lambda x: x**22, 0.0, 1.0)
    assert mono.value == pytest.approx(1.0 / 23.0, rel=1e-13)


# ---------------------------------------------------------------------------
# adaptive refinement
# ---------------------------------------------------------------------------


def test_shifted_inverse_square_root():
    a = 1e-6
    ref = 2.0 * (math.sqrt(1.0 + a) - math.sqrt(a))
    res = adaptive(lambda x: 1.0 / math.sqrt(x + a), 0.0, 1.0, rtol=1e-8)
    assert abs(res.value - ref) <= 1e-8 * abs(ref)
    assert res.nevals > 15  # the near-singularity forces refinement


def test_sine_over_full_period_cancels():
    res = adaptive(math.sin, 0.0, 2.0 * math.pi, atol=1e-10)
    assert abs(res.value) <= 1e-10


def test_exponential_to_tight_rtol():
    res = adaptive(math.exp, 0.0, 1.0, rtol=1e-10)
    assert res.value == pytest.approx(math.e - 1.0, rel=1e-10)


def test_reversed_interval_flips_sign():
    fwd = adaptive(math.exp, 0.0, 1.0, rtol=1e-10)
    rev = adaptive(math.exp, 1.0, 0.0, rtol=1e-10)
    assert rev.value == pytest.approx(-fwd.value, rel=1e-12)


def test_empty_interval_is_zero():
    res = adaptive(math.exp, 0.7, 0.7)
    assert res.value == 0.0


def test_subdivision_limit_carries_best_estimate():
    with pytest.raises(QuadratureError) as err:
        adaptive(
            lambda x: 1.0 / math.sqrt(x + 1e-12), 0.0, 1.0,
            rtol=1e-13, limit=8,
        )
    best = err.value.result
    assert isinstance(best, QuadResult)
    assert np.isfinite(best.value)
    assert best.nevals >= 8 * 15


def test_non_finite_integrand_reports_abscissa():
    def f(x):
        return 1.0 if x < 0.5 else float("nan")

    with pytest.raises(ValueError, match="x=") as err:
        adaptive(f, 0.0, 1.0)
    where = float(re.search(r"x=([0-9.eE+-]+)", str(err.value)).group(1))
    assert 0.5 <= where <= 1.0


# ---------------------------------------------------------------------------
# error-estimate quality over a closed-form suite
# ---------------------------------------------------------------------------

_SUITE = [
    (lambda x: x * x, 0.0, 1.0, 1.0 / 3.0),
    (lambda x: x**22, 0.0, 1.0, 1.0 / 23.0),
    (math.exp, 0.0, 1.0, math.e - 1.0),
    (math.sin, 0.0, math.pi, 2.0),
    (math.cos, 0.0, 1.0, math.sin(1.0)),
    (lambda x: 1.0 / (1.0 + x * x), 0.0, 1.0, math.pi / 4.0),
    (math.sqrt, 0.0, 1.0, 2.0 / 3.0),
    (lambda x: math.log(1.0 + x), 0.0, 1.0, 2.0 * math.log(2.0) - 1.0),
    (
        lambda x: 1.0 / math.sqrt(x + 1e-6),
        0.0,
        1.0,
        2.0 * (math.sqrt(1.0 + 1e-6) - math.sqrt(1e-6)),
    ),
    (lambda x: math.exp(-x * x), 0.0, 2.0,
     math.sqrt(math.pi) / 2.0 * math.erf(2.0)),
    (lambda x: x * math.sin(10.0 * x), 0.0, 2.0 * math.pi,
     -2.0 * math.pi / 10.0),
    (lambda x: 1.0 / (x + 0.1), 0.0, 1.0, math.log(11.0)),
    (lambda x: x**5.5, 0.0, 1.0, 1.0 / 6.5),
    (math.cosh, 0.0, 1.0, math.sinh(1.0)),
    (math.tanh, 0.0, 3.0, math.log(math.cosh(3.0))),
    (lambda x: x * math.exp(x), 0.0, 1.0, 1.0),
    (lambda x: math.sin(x) ** 2, 0.0, math.pi, math.pi / 2.0),
    (lambda x: 1.0 / (1.0 + math.exp(-x)), -3.0, 3.0, 3.0),
    (lambda x: abs(x), -1.0, 2.0, 2.5),
    (lambda x: math.exp(math.sin(x)), 0.0, 2.0 * math.pi,
     2.0 * math.pi * float(i0(1.0))),
]


def test_suite_has_twenty_integrands():
    assert len(_SUITE) == 20


def test_error_estimate_bounds_true_error():
    n_bounded = 0
    for f, a, b, ref in _SUITE:
        res = adaptive(f, a, b, rtol=1e-8)
        assert res.error >= 0.0
        assert res.nevals >= 15
        true_err = abs(res.value - ref)
        if true_err <= res.error:
            n_bounded += 1
        assert true_err <= 10.0 * res.error, (
            f"estimate {res.error:.3e} badly below true error "
            f"{true_err:.3e} for reference {ref!r}"
        )
    assert n_bounded >= 19  # >= 95% of 20


def test_linearity_of_the_integral():
    f, g = math.exp, math.sin
    a, b = 0.0, 2.0
    alpha, beta = 3.5, -2.0
    sep = alpha * adaptive(f, a, b, rtol=1e-10).value + beta * adaptive(
        g, a, b, rtol=1e-10
    ).value
    mix = adaptive(lambda x: alpha * f(x) + beta * g(x), a, b, rtol=1e-10)
    assert mix.value == pytest.approx(sep, rel=2e-10, abs=2e-10)


# ---------------------------------------------------------------------------
# vector integrands
# ---------------------------------------------------------------------------


def test_vector_integrand_components_match_scalar_runs():
    def fvec(x):
        return np.array([math.exp(x), math.sin(x), x * x])

    res = adaptive(fvec, 0.0, 1.0, rtol=1e-10)
    refs = [math.e - 1.0, 1.0 - math.cos(1.0), 1.0 / 3.0]
    assert res.value.shape == (3,)
    assert res.error.shape == (3,)
    assert np.all(res.error >= 0.0)
    for got, ref in zip(res.value, refs):
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_vector_panel_counts_points_not_components():
    def fvec(x):
        return np.array([x, x * x, x**3, x**4])

    res = gk15(fvec, 0.0, 1.0)
    assert res.nevals == 15
