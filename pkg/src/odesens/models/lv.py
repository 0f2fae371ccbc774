"""Lotka-Volterra predator-prey model (non-stiff, 2 states, 3 params)."""

from __future__ import annotations

import numpy as np

from ..ode import ODEProblem

_U0 = np.array([1.0, 1.0])
_P = np.array([1.5, 1.0, 3.0])
_TSPAN = (0.0, 10.0)


def _rhs(u, p, t):
    x, y = u[0], u[1]
    return np.array([p[0] * x - p[1] * x * y, -p[2] * y + x * y])


def _jac(u, p, t):
    x, y = u[0], u[1]
    return np.array([
        [p[0] - p[1] * y, -p[1] * x],
        [y, x - p[2]],
    ])


def lv():
    from . import EstimationDefaults, ModelSpec

    problem = ODEProblem(
        rhs=_rhs,
        u0=_U0.copy(),
        p=_P.copy(),
        t0=_TSPAN[0],
        tf=_TSPAN[1],
        jac=_jac,
        autonomous=True,
    )
    return ModelSpec(
        name="lv",
        problem=problem,
        analytic_jacobian=_jac,
        true_params=_P.copy(),
        default_tspan=_TSPAN,
        recommended_solver="explicit",
        estimation_defaults=EstimationDefaults(
            n_data_points=100,
            initial_guess_rule=lambda p: 0.8 * np.asarray(p, dtype=float),
        ),
    )
