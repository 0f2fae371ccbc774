"""Air pollution chemistry model (stiff, 20 states, 25 reaction rates).

Every reaction rate is a parameter times one or two concentrations; the
right-hand side sums them with fixed stoichiometry.  The Jacobian is
assembled from the same stoichiometry table, so the two stay consistent
by construction.
"""

from __future__ import annotations

import numpy as np

from ..ode import ODEProblem

_U0 = np.array([
    0.0, 0.2, 0.0, 0.04, 0.0, 0.0, 0.1, 0.3, 0.01, 0.0,
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.007, 0.0, 0.0, 0.0,
])
_P = np.array([
    0.35, 26.6, 12300.0, 8.6e-4, 8.2e-4, 15000.0, 1.3e-4, 24000.0,
    16500.0, 9000.0, 0.022, 12000.0, 1.88, 16300.0, 4.8e6, 3.5e-4,
    0.0175, 1.0e9, 4.44e11, 1240.0, 2.1, 5.78, 0.0474, 1780.0, 3.12,
])
_TSPAN = (0.0, 60.0)

# 0-based state indices multiplied into each of the 25 rates
_FACTORS = (
    (0,), (1, 3), (4, 1), (6,), (6,), (6, 5), (8,), (8, 5), (10, 1),
    (10, 0), (12,), (9, 1), (13,), (0, 5), (2,), (3,), (3,), (15,),
    (15,), (16, 5), (18,), (18,), (0, 3), (18, 0), (19,),
)
# per-rate stoichiometry: (state, coefficient) pairs
_STOICH = (
    ((0, -1), (1, 1), (2, 1)),
    ((0, 1), (1, -1), (3, -1)),
    ((0, 1), (1, -1), (4, -1), (5, 1)),
    ((4, 2), (6, -1), (7, 1)),
    ((6, -1), (7, 1)),
    ((4, 1), (5, -1), (6, -1), (7, 1)),
    ((4, 1), (7, 1), (8, -1), (9, 1)),
    ((5, -1), (8, -1), (10, 1)),
    ((0, 1), (1, -1), (9, 1), (10, -1), (11, 1)),
    ((0, -1), (10, -1), (12, 1)),
    ((0, 1), (10, 1), (12, -1)),
    ((0, 1), (1, -1), (9, -1), (13, 1)),
    ((4, 1), (6, 1), (13, -1)),
    ((0, -1), (5, -1), (14, 1)),
    ((2, -1), (3, 1)),
    ((3, -1), (15, 1)),
    ((2, 1), (3, -1)),
    ((5, 2), (15, -1)),
    ((2, 1), (15, -1)),
    ((4, 1), (5, -1), (16, -1), (17, 1)),
    ((1, 1), (18, -1)),
    ((0, 1), (2, 1), (18, -1)),
    ((0, -1), (3, -1), (18, 1)),
    ((0, -1), (18, -1), (19, 1)),
    ((0, 1), (18, 1), (19, -1)),
)


def _rhs(u, p, t):
    r1 = p[0] * u[0]
    r2 = p[1] * u[1] * u[3]
    r3 = p[2] * u[4] * u[1]
    r4 = p[3] * u[6]
    r5 = p[4] * u[6]
    r6 = p[5] * u[6] * u[5]
    r7 = p[6] * u[8]
    r8 = p[7] * u[8] * u[5]
    r9 = p[8] * u[10] * u[1]
    r10 = p[9] * u[10] * u[0]
    r11 = p[10] * u[12]
    r12 = p[11] * u[9] * u[1]
    r13 = p[12] * u[13]
    r14 = p[13] * u[0] * u[5]
    r15 = p[14] * u[2]
    r16 = p[15] * u[3]
    r17 = p[16] * u[3]
    r18 = p[17] * u[15]
    r19 = p[18] * u[15]
    r20 = p[19] * u[16] * u[5]
    r21 = p[20] * u[18]
    r22 = p[21] * u[18]
    r23 = p[22] * u[0] * u[3]
    r24 = p[23] * u[18] * u[0]
    r25 = p[24] * u[19]
    return np.array([
        -r1 - r10 - r14 - r23 - r24 + r2 + r3 + r9 + r11 + r12 + r22 + r25,
        -r2 - r3 - r9 - r12 + r1 + r21,
        -r15 + r1 + r17 + r19 + r22,
        -r2 - r16 - r17 - r23 + r15,
        -r3 + 2.0 * r4 + r6 + r7 + r13 + r20,
        -r6 - r8 - r14 - r20 + r3 + 2.0 * r18,
        -r4 - r5 - r6 + r13,
        r4 + r5 + r6 + r7,
        -r7 - r8,
        -r12 + r7 + r9,
        -r9 - r10 + r8 + r11,
        r9,
        -r11 + r10,
        -r13 + r12,
        r14,
        -r18 - r19 + r16,
        -r20,
        r20,
        -r21 - r22 - r24 + r23 + r25,
        -r25 + r24,
    ])


def _jac(u, p, t):
    obj = u.dtype == object or p.dtype == object
    J = np.zeros((20, 20), dtype=object if obj else float)
    if obj:
        J.fill(0.0)
    for k, factors in enumerate(_FACTORS):
        if len(factors) == 1:
            derivs = ((factors[0], p[k]),)
        else:
            a, b = factors
            derivs = ((a, p[k] * u[b]), (b, p[k] * u[a]))
        for col, dval in derivs:
            for row, coeff in _STOICH[k]:
                J[row, col] = J[row, col] + coeff * dval
    return J


def pollu():
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
        name="pollu",
        problem=problem,
        analytic_jacobian=_jac,
        true_params=_P.copy(),
        default_tspan=_TSPAN,
        recommended_solver="stiff",
        estimation_defaults=EstimationDefaults(
            n_data_points=10,
            initial_guess_rule=lambda p: 0.9 * np.asarray(p, dtype=float),
        ),
    )
