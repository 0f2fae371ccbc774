"""Two-dimensional Brusselator reaction-diffusion system, discretized.

The PDE

    u_t = B + u^2 v - (A+1) u + Du * lap(u) + f(x, y, t)
    v_t = A u - u^2 v + Dv * lap(v)

is reduced to 2*N^2 ODEs by second-order central differences on an N x N
uniform grid over [0,1]^2 (spacing 1/(N-1), nodes at i/(N-1)) with no-flux
boundaries via ghost-point reflection.  All four coefficient fields are
spatially varying, giving 4*N^2 parameters, initialized uniformly to
A=3.4, B=1.0, Du=Dv=10.0.  The forcing f injects 5 inside the disc of
radius 0.1 around (0.3, 0.6) once t >= 1.1; the switch time is supplied
as a forced step boundary so the integrator lands on the kink exactly.
"""

from __future__ import annotations

import numpy as np

from ..ode import ODEProblem

_T_SWITCH = 1.1
_TSPAN = (0.0, 10.0)
_P_FIELDS = (3.4, 1.0, 10.0, 10.0)


def forcing(x, y, t):
    """Point forcing applied to the u equation."""
    if (x - 0.3) ** 2 + (y - 0.6) ** 2 <= 0.1 ** 2 and t >= _T_SWITCH:
        return 5.0
    return 0.0


def _reflect(i, n):
    if i < 0:
        return 1
    if i >= n:
        return n - 2
    return i


def bruss(N=3):
    """Model on an N x N grid; N must be at least 2."""
    from . import EstimationDefaults, ModelSpec

    n = int(N)
    if n < 2:
        raise ValueError("grid size N must be at least 2")
    nn = n * n
    h = 1.0 / (n - 1)
    inv_h2 = 1.0 / (h * h)
    xs = np.arange(n) * h
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    u0_grid = 22.0 * (Y * (1.0 - Y)) ** 1.5
    v0_grid = 27.0 * (X * (1.0 - X)) ** 1.5
    u0 = np.concatenate([u0_grid.ravel(), v0_grid.ravel()])
    p0 = np.concatenate([np.full(nn, c) for c in _P_FIELDS])
    force_grid = np.where(
        (X - 0.3) ** 2 + (Y - 0.6) ** 2 <= 0.1 ** 2, 5.0, 0.0
    )

    def laplacian(F):
        rows = np.concatenate([F[1:2, :], F, F[n - 2:n - 1, :]], axis=0)
        d2 = rows[:-2, :] + rows[2:, :] - 2.0 * F
        cols = np.concatenate([F[:, 1:2], F, F[:, n - 2:n - 1]], axis=1)
        return (d2 + cols[:, :-2] + cols[:, 2:] - 2.0 * F) * inv_h2

    def rhs(u, p, t):
        U = u[:nn].reshape(n, n)
        V = u[nn:].reshape(n, n)
        A = p[0:nn].reshape(n, n)
        B = p[nn:2 * nn].reshape(n, n)
        Du = p[2 * nn:3 * nn].reshape(n, n)
        Dv = p[3 * nn:4 * nn].reshape(n, n)
        UUV = U * U * V
        du = B + UUV - (A + 1.0) * U + Du * laplacian(U)
        dv = A * U - UUV + Dv * laplacian(V)
        if t >= _T_SWITCH:
            du = du + force_grid
        return np.concatenate([du.ravel(), dv.ravel()])

    def jac(u, p, t):
        U = u[:nn]
        V = u[nn:]
        A = p[0:nn]
        Du = p[2 * nn:3 * nn]
        Dv = p[3 * nn:4 * nn]
        obj = u.dtype == object or p.dtype == object
        J = np.zeros((2 * nn, 2 * nn), dtype=object if obj else float)
        if obj:
            J.fill(0.0)
        for i in range(n):
            for j in range(n):
                k = i * n + j
                uu, vv = U[k], V[k]
                J[k, k] = -(A[k] + 1.0) + 2.0 * uu * vv - 4.0 * Du[k] * inv_h2
                J[k, nn + k] = uu * uu
                J[nn + k, k] = A[k] - 2.0 * uu * vv
                J[nn + k, nn + k] = -uu * uu - 4.0 * Dv[k] * inv_h2
                for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    kk = _reflect(i + di, n) * n + _reflect(j + dj, n)
                    J[k, kk] = J[k, kk] + Du[k] * inv_h2
                    J[nn + k, nn + kk] = J[nn + k, nn + kk] + Dv[k] * inv_h2
        return J

    problem = ODEProblem(
        rhs=rhs,
        u0=u0,
        p=p0,
        t0=_TSPAN[0],
        tf=_TSPAN[1],
        jac=jac,
        tstops=(_T_SWITCH,),
        # the only explicit time dependence is the forcing switch, which is
        # piecewise constant and handled by the step boundary above
        autonomous=True,
    )
    return ModelSpec(
        name="bruss",
        problem=problem,
        analytic_jacobian=jac,
        true_params=p0.copy(),
        default_tspan=_TSPAN,
        recommended_solver="stiff",
        estimation_defaults=EstimationDefaults(
            n_data_points=20,
            initial_guess_rule=lambda p: 0.9 * np.asarray(p, dtype=float),
        ),
    )
