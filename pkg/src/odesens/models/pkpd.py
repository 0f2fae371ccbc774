"""Pharmacokinetic/pharmacodynamic model with scheduled doses.

Three-compartment kinetics (depot, central, two peripherals) with
saturable elimination from the central compartment, plus an indirect
response state inhibited by central concentration.  Doses of 100 are
added to the depot every 24 time units as parameter-independent time
events.

Parameter layout: [ka, CL, Vc, Q1, Q2, Vp1, Vp2, Vmax, Km, kin, Imax,
IC50, kout, gamma].
"""

from __future__ import annotations

import numpy as np

from ..dual import Dual, value
from ..ode import ODEProblem, TimeEvent

_U0 = np.array([100.0, 0.0, 0.0, 0.0, 5.0])
_P = np.array([
    1.0, 1.0, 20.0, 2.0, 0.5, 10.0, 100.0, 0.0, 2.0, 10.0, 1.0, 2.0,
    2.0, 1.0,
])
PARAM_NAMES = (
    "ka", "CL", "Vc", "Q1", "Q2", "Vp1", "Vp2", "Vmax", "Km", "kin",
    "Imax", "IC50", "kout", "gamma",
)
_TSPAN = (0.0, 100.0)
_DOSE_TIMES = (24.0, 48.0, 72.0, 96.0)
_DOSE_AMOUNT = 100.0


def _rhs(u, p, t):
    depot, cent, per1, per2, resp = u[0], u[1], u[2], u[3], u[4]
    ka, cl, vc, q1, q2 = p[0], p[1], p[2], p[3], p[4]
    vp1, vp2, vmax, km = p[5], p[6], p[7], p[8]
    kin, imax, ic50, kout, gam = p[9], p[10], p[11], p[12], p[13]
    conc = cent / vc
    elim = (cl + vmax / (km + conc) + q1) * conc
    d_depot = -ka * depot
    d_cent = (
        ka * depot
        - elim
        + q1 * (per1 / vp1)
        - q2 * conc
        + q2 * (per2 / vp2)
    )
    d_per1 = q1 * conc - q1 * (per1 / vp1)
    d_per2 = q2 * conc - q2 * (per2 / vp2)
    cg = conc ** gam
    d_resp = kin * (1.0 - imax * cg / (ic50 ** gam + cg)) - kout * resp
    return np.array([d_depot, d_cent, d_per1, d_per2, d_resp])


def _pow_guarded(base, expo):
    """base**expo where a float zero base never raises on expo-1 < 0."""
    if isinstance(base, Dual):
        return base ** expo
    if value(base) == 0.0:
        e = value(expo)
        if e == 0.0:
            return 1.0
        return 0.0 if e > 0.0 else np.inf
    return base ** expo


def _jac(u, p, t):
    cent, resp = u[1], u[4]
    cl, vc, q1, q2 = p[1], p[2], p[3], p[4]
    vp1, vp2, vmax, km = p[5], p[6], p[7], p[8]
    kin, imax, ic50, kout, gam = p[9], p[10], p[11], p[12], p[13]
    conc = cent / vc
    obj = u.dtype == object or p.dtype == object
    J = np.zeros((5, 5), dtype=object if obj else float)
    if obj:
        J.fill(0.0)
    J[0, 0] = -p[0]
    J[1, 0] = p[0]
    sat = km + conc
    d_elim = cl + q1 + vmax / sat - vmax * conc / (sat * sat)
    J[1, 1] = -(d_elim + q2) / vc
    J[1, 2] = q1 / vp1
    J[1, 3] = q2 / vp2
    J[2, 1] = q1 / vc
    J[2, 2] = -q1 / vp1
    J[3, 1] = q2 / vc
    J[3, 3] = -q2 / vp2
    cg = _pow_guarded(conc, gam)
    denom = ic50 ** gam + cg
    d_inhib = gam * _pow_guarded(conc, gam - 1.0) * (ic50 ** gam) / (
        denom * denom
    )
    J[4, 1] = -kin * imax * d_inhib / vc
    J[4, 4] = -kout
    return J


def _dose(u, p, t):
    u_new = np.array(u, copy=True)
    u_new[0] = u_new[0] + _DOSE_AMOUNT
    return u_new, p


def pkpd():
    from . import EstimationDefaults, ModelSpec

    problem = ODEProblem(
        rhs=_rhs,
        u0=_U0.copy(),
        p=_P.copy(),
        t0=_TSPAN[0],
        tf=_TSPAN[1],
        jac=_jac,
        time_events=(TimeEvent(times=_DOSE_TIMES, effect=_dose),),
        autonomous=True,
    )
    return ModelSpec(
        name="pkpd",
        problem=problem,
        analytic_jacobian=_jac,
        true_params=_P.copy(),
        default_tspan=_TSPAN,
        recommended_solver="explicit",
        estimation_defaults=EstimationDefaults(
            n_data_points=41,
            initial_guess_rule=lambda p: 0.95 * np.asarray(p, dtype=float)
            + 0.001,
        ),
    )
