"""Stiffly accurate Rosenbrock method of order 4(3) for stiff problems.

Six stages sharing one factorization of ``W = I/(h*gamma) - J`` per step,
an embedded third-order error estimate (the last stage increment), and
third-order Hermite dense output.  Stage right-hand sides are evaluated in
generic scalar arithmetic; only the linear algebra needs special handling
when duals are present, and that is done exactly: the value part is solved
with the factored float matrix, then one multi-right-hand-side correction
solve accounts for the dual parts of ``W`` via the identity
``d(W^-1 r) = W^-1 (dr - dW W^-1 r)``.

Because the dual parts of ``W`` come from the problem's Jacobian, stiff
solves carry parameter partials exactly only when the problem supplies an
analytic ``jac``; the forward-mode fallback differentiates the right-hand
side at the value point and so freezes the Jacobian's own parameter
dependence (the bundled models all supply analytic Jacobians).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dual import (
    Dual,
    _jacobian_vector,
    dual_array,
    partials_matrix,
    value,
    values,
    width_of,
)
from .ode import _StepFailure, _error_norm

_GAMMA = 0.25

_A = (
    (),
    (1.544,),
    (0.9466785280815826, 0.2557011698983284),
    (3.314825187068521, 2.896124015972201, 0.9986419139977817),
    (1.221224509226641, 6.019134481288629, 12.53708332932087,
     -0.687886036105895),
    (1.221224509226641, 6.019134481288629, 12.53708332932087,
     -0.687886036105895, 1.0),
)

_C = (
    (),
    (-5.6688,),
    (-2.430093356833875, -0.2063599157091915),
    (-0.1073529058151375, -9.594562251023355, -20.47028614809616),
    (7.496443313967647, -10.24680431464352, -33.99990352819905,
     11.7089089320616),
    (8.083246795921522, -7.981132988064893, -31.52159432874371,
     16.31930543123136, -6.058818238834054),
)

_M = (1.221224509226641, 6.019134481288629, 12.53708332932087,
      -0.687886036105895, 1.0, 1.0)

_ALPHA = (0.0, 0.386, 0.21, 0.63, 1.0, 1.0)

_GAMMA_I = (0.25, -0.1043, 0.1035, -0.03620000000000023, 0.0, 0.0)


class BlockDiagJacobian:
    """Jacobian of the form ``block_diag(block, ..., block)``.

    Extended sensitivity systems repeat one state-space Jacobian along the
    diagonal; factoring the single block once and solving all blocks as
    multiple right-hand sides avoids the dense blow-up.
    """

    __slots__ = ("block", "count")

    def __init__(self, block, count):
        self.block = np.asarray(block, dtype=float)
        self.count = count


class CoupledBlockJacobian:
    """Block lower-triangular Jacobian of an appended derivative system.

    Every diagonal block equals ``block``; row ``i > 0`` additionally couples
    to the leading block through a matrix ``C_i`` that is never materialized:
    ``coupling(x0)`` returns the stacked products ``C_i @ x0`` as columns of
    an ``(n, count - 1)`` array.  One factorization of ``block`` then solves
    the whole system by forward substitution, and the stage matrix stays
    exact — important because the stepper's order relies on it.
    """

    __slots__ = ("block", "count", "coupling")

    def __init__(self, block, count, coupling):
        self.block = np.asarray(block, dtype=float)
        self.count = count
        self.coupling = coupling


class _FloatW:
    def __init__(self, A):
        if not np.all(np.isfinite(A)):
            raise _StepFailure("non-finite stage matrix")
        self.lu = lu_factor(A)

    def solve(self, rhs):
        return lu_solve(self.lu, np.asarray(rhs, dtype=float))


class _CoupledW:
    def __init__(self, A_block, count, n, coupling):
        if not np.all(np.isfinite(A_block)):
            raise _StepFailure("non-finite stage matrix")
        self.lu = lu_factor(A_block)
        self.count = count
        self.n = n
        self.coupling = coupling

    def solve(self, rhs):
        R = np.asarray(rhs, dtype=float).reshape(self.count, self.n)
        x0 = lu_solve(self.lu, R[0])
        CX = self.coupling(x0)
        if not np.all(np.isfinite(CX)):
            raise _StepFailure("non-finite stage matrix coupling")
        X = lu_solve(self.lu, R[1:].T + CX)
        return np.concatenate([x0, X.T.ravel()])


class _BlockW:
    def __init__(self, A_block, count, n):
        if not np.all(np.isfinite(A_block)):
            raise _StepFailure("non-finite stage matrix")
        self.lu = lu_factor(A_block)
        self.count = count
        self.n = n

    def solve(self, rhs):
        R = np.asarray(rhs, dtype=float).reshape(self.count, self.n)
        X = lu_solve(self.lu, R.T)
        return X.T.ravel()


class _DualW:
    """Factored value part plus the dual entries of ``W`` for corrections."""

    def __init__(self, A_val, nz, width):
        if not np.all(np.isfinite(A_val)):
            raise _StepFailure("non-finite stage matrix")
        self.lu = lu_factor(A_val)
        self.nz = nz  # list of (i, j, partials of W[i, j])
        self.width = width

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        rv = values(rhs)
        xv = lu_solve(self.lu, rv)
        corr = partials_matrix(rhs, self.width)
        for i, j, pv in self.nz:
            corr[i] -= pv * xv[j]
        xp = lu_solve(self.lu, corr)
        return dual_array(xv, xp)


def _make_w(J, h, gamma, n, width):
    d = 1.0 / (h * gamma)
    if isinstance(J, (BlockDiagJacobian, CoupledBlockJacobian)):
        if width:
            raise _StepFailure(
                "block-structured Jacobians are limited to float solves"
            )
        A = -J.block.copy()
        np.fill_diagonal(A, A.diagonal() + value(d))
        if isinstance(J, CoupledBlockJacobian):
            return _CoupledW(A, J.count, J.block.shape[0], J.coupling)
        return _BlockW(A, J.count, J.block.shape[0])
    J = np.asarray(J)
    if width == 0:
        # object-dtype J with plain float entries still belongs here
        A = -values(J).astype(float, copy=False)
        np.fill_diagonal(A, A.diagonal() + float(value(d)))
        return _FloatW(A)
    A = -values(J)
    np.fill_diagonal(A, A.diagonal() + value(d))
    nz = {}
    if J.dtype == object:
        flat = J.ravel()
        for idx in range(flat.shape[0]):
            x = flat[idx]
            if isinstance(x, Dual):
                nz[divmod(idx, n)] = -x.partials
    if isinstance(d, Dual):
        for i in range(n):
            key = (i, i)
            if key in nz:
                nz[key] = nz[key] + d.partials
            else:
                nz[key] = d.partials.copy()
    packed = [(i, j, pv) for (i, j), pv in nz.items()]
    return _DualW(A, packed, width)


class HermiteSegment:
    """Cubic Hermite dense output from endpoint values and slopes."""

    __slots__ = ("t0", "h", "y0", "y1", "f0", "f1")

    def __init__(self, t0, h, y0, y1, f0, f1):
        self.t0 = t0
        self.h = h
        self.y0 = y0
        self.y1 = y1
        self.f0 = f0
        self.f1 = f1

    def eval(self, t):
        s = (t - self.t0) / self.h
        s2 = s * s
        s3 = s2 * s
        h00 = 2.0 * s3 - 3.0 * s2 + 1.0
        h10 = s3 - 2.0 * s2 + s
        h01 = -2.0 * s3 + 3.0 * s2
        h11 = s3 - s2
        return (
            h00 * self.y0
            + (h10 * self.h) * self.f0
            + h01 * self.y1
            + (h11 * self.h) * self.f1
        )


class Rodas4:
    """Stepper: 6-stage Rosenbrock 4(3), one factorization per step."""

    order = 4
    ctrl = (0.25, 0.0, 0.2, 5.0)

    def step(self, f, u, p, t, h, f0, cfg, prob, stats):
        n = u.shape[0]
        h_width = h.partials.shape[0] if isinstance(h, Dual) else 0
        width = max(width_of(u), width_of(p), h_width)
        J = self._jacobian(prob, u, p, t, stats)
        W = _make_w(J, h, _GAMMA, n, width)
        if prob.autonomous:
            dfdt = None
        else:
            tau = np.sqrt(np.finfo(float).eps) * max(abs(value(h)), 1e-10)
            dfdt = (f(u, p, t + tau) - f0) / tau
        hinv = 1.0 / h
        ks = []
        for i in range(6):
            if i == 0:
                fi = f0
            else:
                acc = _A[i][0] * ks[0]
                for a, k in zip(_A[i][1:], ks[1:]):
                    acc = acc + a * k
                fi = f(u + acc, p, t + _ALPHA[i] * h)
            rhs = fi
            if i > 0:
                cacc = (_C[i][0] * hinv) * ks[0]
                for c, k in zip(_C[i][1:], ks[1:]):
                    cacc = cacc + (c * hinv) * k
                rhs = rhs + cacc
            if dfdt is not None and _GAMMA_I[i] != 0.0:
                rhs = rhs + (_GAMMA_I[i] * h) * dfdt
            ks.append(W.solve(rhs))
            stats.nsolve += 1
        acc = _M[0] * ks[0]
        for m, k in zip(_M[1:], ks[1:]):
            acc = acc + m * k
        u_new = u + acc
        err = _error_norm(ks[5], u, u_new, cfg)
        f_new = f(u_new, p, t + h)
        seg = HermiteSegment(t, h, u, u_new, f0, f_new)
        return u_new, err, f_new, seg

    def _jacobian(self, prob, u, p, t, stats):
        stats.njac += 1
        if prob.jac is not None:
            return prob.jac(u, p, t)
        # forward-AD fallback at the value point; dual parameter dependence
        # of the Jacobian itself is frozen here (see module docstring)
        pv = values(p)
        tv = value(t)
        return _jacobian_vector(lambda uu: prob.rhs(uu, pv, tv), values(u))
