"""Linear control problem whose event time and jump depend on parameters.

Dynamics x' = -a, y' = b from (1, 0); when x crosses zero (at t* = 1/a),
the parameter b is set to zero, freezing y.  The closed-form solution

    x(t) = 1 - a t
    y(t) = b t          for t <  t*
    y(t) = b / a        for t >= t*

makes this the standard check that a sensitivity method sees both the
parameter dependence of the crossing time and of the jump: naive
continuation through the event misses dy/da entirely and doubles dy/db.
"""

from __future__ import annotations

import numpy as np

from ..ode import EventSpec, ODEProblem

_TSPAN = (0.0, 1.0)


def _rhs(u, p, t):
    zero = 0.0 * u[0]
    return np.array([zero - p[0], zero + p[1]])


def _jac(u, p, t):
    return np.zeros((2, 2))


def _crossing(u, p, t):
    return u[0]


def _switch_off(u, p, t):
    p_new = np.array(p, copy=True)
    p_new[1] = 0.0
    return u, p_new


def hybrid_control(a=2.0, b=1.0):
    from . import EstimationDefaults, ModelSpec

    a = float(a)
    b = float(b)
    if not (a > 0.0 and b > 0.0):
        raise ValueError("parameters a and b must be positive")

    def analytic_solution(p, t):
        pa, pb = float(p[0]), float(p[1])
        x = 1.0 - pa * t
        y = pb * t if t < 1.0 / pa else pb / pa
        return np.array([x, y])

    def analytic_sensitivity(p, t):
        """d[x, y]/d[a, b] of the closed-form solution at time t."""
        pa, pb = float(p[0]), float(p[1])
        if t < 1.0 / pa:
            return np.array([[-t, 0.0], [0.0, t]])
        return np.array([[-t, 0.0], [-pb / (pa * pa), 1.0 / pa]])

    problem = ODEProblem(
        rhs=_rhs,
        u0=np.array([1.0, 0.0]),
        p=np.array([a, b]),
        t0=_TSPAN[0],
        tf=_TSPAN[1],
        jac=_jac,
        events=(EventSpec(g=_crossing, effect=_switch_off, direction=0),),
        autonomous=True,
    )
    return ModelSpec(
        name="hybrid",
        problem=problem,
        analytic_jacobian=_jac,
        true_params=np.array([a, b]),
        default_tspan=_TSPAN,
        recommended_solver="explicit",
        estimation_defaults=EstimationDefaults(
            n_data_points=100,
            initial_guess_rule=lambda p: 0.9 * np.asarray(p, dtype=float),
        ),
        analytic_solution=analytic_solution,
        analytic_sensitivity=analytic_sensitivity,
    )
