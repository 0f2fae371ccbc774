"""Forward-mode dual arithmetic: exact rules, FD agreement, chunking."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odesens.dual import (
    Dual,
    DualWidthError,
    SeedPlan,
    diagnostics,
    jacobian,
    jvp,
    plan_chunks,
    seed_array,
    value,
    values,
    width_of,
)

_EPS = float(np.finfo(float).eps)


def lv_rhs(u, p, t):
    x, y = u
    return np.array([p[0] * x - p[1] * x * y, -p[2] * y + x * y])


LV_POINT = (np.array([1.0, 1.0]), np.array([1.5, 1.0, 3.0]), 0.0)


# ---------------------------------------------------------------------------
# exact arithmetic rules
# ---------------------------------------------------------------------------


def test_product_rule():
    r = Dual(2.0, [1.0, 0.0]) * Dual(3.0, [0.0, 1.0])
    assert r.value == 6.0
    assert np.array_equal(r.partials, [3.0, 2.0])


def test_additive_identity():
    x = Dual(1.7, [2.0, -3.0])
    r = x + Dual(0.0, [0.0, 0.0])
    assert r.value == x.value
    assert np.array_equal(r.partials, x.partials)


def test_quotient_rule_constant_denominator():
    r = Dual(1.0, [1.0]) / Dual(2.0, [0.0])
    assert r.value == 0.5
    assert np.array_equal(r.partials, [0.5])


def test_exp_at_zero():
    r = np.exp(Dual(0.0, [1.0]))
    assert r.value == 1.0
    assert np.array_equal(r.partials, [1.0])


def test_sin_at_zero():
    r = np.sin(Dual(0.0, [1.0]))
    assert r.value == 0.0
    assert np.array_equal(r.partials, [1.0])


def test_sqrt_of_four():
    r = np.sqrt(Dual(4.0, [1.0]))
    assert r.value == 2.0
    assert np.array_equal(r.partials, [0.25])


def test_width_mismatch_raises():
    with pytest.raises(DualWidthError):
        Dual(1.0, [1.0]) + Dual(1.0, [1.0, 0.0])


def test_division_by_zero_value_raises():
    with pytest.raises(ZeroDivisionError):
        Dual(1.0, [1.0]) / Dual(0.0, [0.0])


def test_zero_partials_acts_like_plain_value():
    x = Dual(0.7, [1.0, -2.0])
    c = 1.9
    const = Dual(c, [0.0, 0.0])
    for op in (
        lambda a, b: a + b,
        lambda a, b: a - b,
        lambda a, b: a * b,
        lambda a, b: a / b,
    ):
        with_const = op(x, const)
        with_float = op(x, c)
        assert with_const.value == with_float.value
        assert np.array_equal(with_const.partials, with_float.partials)


def test_abs_negative_and_positive():
    neg = abs(Dual(-2.0, [3.0]))
    assert neg.value == 2.0 and np.array_equal(neg.partials, [-3.0])
    pos = abs(Dual(2.0, [3.0]))
    assert pos.value == 2.0 and np.array_equal(pos.partials, [3.0])


def test_abs_at_zero_returns_zero_slope_and_counts():
    diagnostics.reset()
    r = abs(Dual(0.0, [1.0, 2.0]))
    assert r.value == 0.0
    assert np.array_equal(r.partials, [0.0, 0.0])
    assert diagnostics.abs_at_zero == 1


def test_comparisons_use_values_only():
    assert Dual(1.0, [99.0]) < Dual(2.0, [-99.0])
    assert Dual(2.0, [0.0]) > 1.5
    assert not (Dual(1.0, [1.0]) < Dual(1.0, [2.0]))


# ---------------------------------------------------------------------------
# derivative of every elementary op matches a central finite difference
# ---------------------------------------------------------------------------

# Domains keep sample points away from singularities so the truncation
# error of the central difference stays below the comparison tolerance.
_UNARY_OPS = {
    "exp": (np.exp, lambda r: abs(r) < 20.0),
    "log": (np.log, lambda r: r > 0.1),
    "sin": (np.sin, lambda r: True),
    "cos": (np.cos, lambda r: True),
    "sqrt": (np.sqrt, lambda r: r > 0.1),
    "square": (lambda x: x**2, lambda r: True),
    "pow3.5": (lambda x: x**3.5, lambda r: r > 0.1),
    "abs": (np.abs, lambda r: abs(r) > 0.1),
    "recip": (lambda x: 1.0 / x, lambda r: abs(r) > 0.3),
}


@pytest.mark.parametrize("name", sorted(_UNARY_OPS))
@given(x=st.floats(-5.0, 5.0))
@settings(max_examples=40, deadline=None)
def test_unary_derivative_matches_fd(name, x):
    fn, in_domain = _UNARY_OPS[name]
    if not in_domain(x):
        return
    d = fn(Dual(x, [1.0]))
    h = _EPS ** (1.0 / 3.0) * max(1.0, abs(x))
    if not (in_domain(x - h) and in_domain(x + h)):
        return
    fd = (value(fn(x + h)) - value(fn(x - h))) / (2.0 * h)
    assert d.partials[0] == pytest.approx(
        fd, rel=10.0 * np.sqrt(_EPS), abs=10.0 * np.sqrt(_EPS)
    )


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: a + b,
        lambda a, b: a - b,
        lambda a, b: a * b,
        lambda a, b: a / b,
    ],
    ids=["add", "sub", "mul", "div"],
)
@given(a=st.floats(-4.0, 4.0), b=st.floats(0.5, 4.0))
@settings(max_examples=40, deadline=None)
def test_binary_derivative_matches_fd(op, a, b):
    # derivative with respect to each operand, the other held constant
    da = op(Dual(a, [1.0]), Dual(b, [0.0])).partials[0]
    db = op(Dual(a, [0.0]), Dual(b, [1.0])).partials[0]
    h = _EPS ** (1.0 / 3.0) * 4.0
    fa = (op(a + h, b) - op(a - h, b)) / (2.0 * h)
    fb = (op(a, b + h) - op(a, b - h)) / (2.0 * h)
    tol = dict(rel=10.0 * np.sqrt(_EPS), abs=10.0 * np.sqrt(_EPS))
    assert da == pytest.approx(fa, **tol)
    assert db == pytest.approx(fb, **tol)


# ---------------------------------------------------------------------------
# chain rule over randomly composed expressions
# ---------------------------------------------------------------------------

# Every op is smooth on all of R (squashed where needed) so central
# differences converge at any sampled point.
_LEAF = st.just(("x",))
_TREE = st.recursive(
    _LEAF,
    lambda sub: st.one_of(
        st.tuples(st.sampled_from(["sin", "cos", "sqexp", "slog", "ssqrt",
                                   "neg"]), sub),
        st.tuples(st.sampled_from(["add", "sub", "smul", "sdiv"]), sub, sub),
    ),
    max_leaves=12,
)


def _eval_tree(tree, x):
    kind = tree[0]
    if kind == "x":
        return x
    if len(tree) == 2:
        a = _eval_tree(tree[1], x)
        if kind == "sin":
            return np.sin(a)
        if kind == "cos":
            return np.cos(a)
        if kind == "sqexp":
            return np.exp(a / np.sqrt(1.0 + a * a))
        if kind == "slog":
            return np.log(a * a + 1.0)
        if kind == "ssqrt":
            return np.sqrt(a * a + 1.0)
        return -a
    a = _eval_tree(tree[1], x)
    b = _eval_tree(tree[2], x)
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "smul":
        ab = a * b
        return ab / (1.0 + ab * ab)
    return a / (1.0 + b * b)


@given(tree=_TREE, x=st.floats(-3.0, 3.0))
@settings(max_examples=120, deadline=None)
def test_composed_expression_derivative_matches_fd(tree, x):
    d = _eval_tree(tree, Dual(x, [1.0]))
    if not isinstance(d, Dual):  # tree without any leaf dependence
        return
    h = _EPS ** (1.0 / 3.0) * max(1.0, abs(x))
    lo = _eval_tree(tree, x - h)
    hi = _eval_tree(tree, x + h)
    fd = (hi - lo) / (2.0 * h)
    assert d.partials[0] == pytest.approx(fd, rel=1e-6, abs=1e-6)


# ---------------------------------------------------------------------------
# jvp / jacobian engine
# ---------------------------------------------------------------------------


def test_jvp_on_two_species_interaction():
    u, p, t = LV_POINT
    got = jvp(lv_rhs, u, p, t, np.array([1.0, 0.0]))
    assert np.allclose(got, [0.5, 1.0], atol=1e-14)


def test_jvp_zero_direction_gives_zero():
    u, p, t = LV_POINT
    assert np.array_equal(jvp(lv_rhs, u, p, t, np.zeros(2)), np.zeros(2))


def test_jvp_identity_rhs_returns_direction():
    v = np.array([0.3, -0.7, 2.0])
    got = jvp(lambda u, p, t: u, np.ones(3), np.zeros(1), 0.0, v)
    assert np.array_equal(got, v)


def test_jacobian_wrt_state():
    u, p, t = LV_POINT
    J = jacobian(lv_rhs, u, p, t, wrt="state")
    assert np.allclose(J, [[0.5, -1.0], [1.0, -2.0]], atol=1e-14)


def test_jacobian_wrt_params():
    u, p, t = LV_POINT
    P = jacobian(lv_rhs, u, p, t, wrt="params")
    assert np.allclose(P, [[1.0, -1.0, 0.0], [0.0, 0.0, -1.0]], atol=1e-14)


def test_jacobian_of_linear_map_is_its_matrix():
    A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [4.0, 0.0, 0.5]])
    J = jacobian(lambda u, p, t: A @ u, np.array([0.2, -1.0, 3.3]),
                 np.zeros(1), 0.0, wrt="state")
    assert np.allclose(J, A, atol=1e-13)


@pytest.mark.parametrize("chunk", [1, 2, None])
def test_chunked_jacobian_is_bitwise_identical(chunk):
    u, p, t = LV_POINT
    full = jacobian(lv_rhs, u, p, t, wrt="params", chunk=None)
    got = jacobian(lv_rhs, u, p, t, wrt="params", chunk=chunk)
    assert np.array_equal(got, full)


def test_seed_plan_rejects_out_of_range_chunk():
    with pytest.raises(ValueError):
        SeedPlan(4, 2, 2)
    with pytest.raises(ValueError):
        SeedPlan(4, 0, 0)


def test_plan_chunks_cover_all_directions():
    plans = plan_chunks(5, 2)
    assert [(pl.start, pl.stop) for pl in plans] == [(0, 2), (2, 4), (4, 5)]
    assert plan_chunks(3) == [SeedPlan(3, 3, 0)]


def test_seed_array_and_extractors():
    arr = seed_array(np.array([1.0, 2.0, 3.0]), 2, [0, -1, 1])
    assert width_of(arr) == 2
    assert np.array_equal(values(arr), [1.0, 2.0, 3.0])
    assert np.array_equal(arr[0].partials, [1.0, 0.0])
    assert np.array_equal(arr[1].partials, [0.0, 0.0])
    assert np.array_equal(arr[2].partials, [0.0, 1.0])
