"""Explicit Runge-Kutta 5(4) pair with free interpolant.

Seven stages, first-same-as-last, embedded fourth-order error estimate,
and a fourth-order continuous extension evaluated from the stage slopes.
All stage arithmetic is elementwise over the state vector, so it works
unchanged on float arrays and on object arrays of dual scalars; the step
size enters generically, which keeps dual time (after events) flowing
through both the step and the interpolant.
"""

from __future__ import annotations

import numpy as np

from .ode import _error_norm

_C = (0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0)

_A = (
    (),
    (0.161,),
    (-0.008480655492356989, 0.335480655492357),
    (2.8971530571054935, -6.359448489975075, 4.3622954328695815),
    (5.325864828439257, -11.748883564062828, 7.4955393428898365,
     -0.09249506636175525),
    (5.86145544294642, -12.92096931784711, 8.159367898576159,
     -0.071584973281401, -0.028269050394068383),
    (0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742,
     -3.290069515436081, 2.324710524099774),
)

_B = (0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742,
      -3.290069515436081, 2.324710524099774, 0.0)

# difference between the fifth- and embedded fourth-order weights
_BTILDE = (-0.00178001105222577714, -0.0008164344596567469,
           0.007880878010261995, -0.1447110071732629, 0.5823571654525552,
           -0.45808210592918697, 0.015151515151515152)


def _interp_weights(theta):
    """Stage weights b_i(theta) of the free fourth-order interpolant."""
    t2 = theta * theta
    b1 = theta * (1.0 + theta * (-2.763706197274826
                                 + theta * (2.9132554618219126
                                            - 1.0530884977290216 * theta)))
    b2 = t2 * (0.13169999999999998 + theta * (-0.2234 + 0.1017 * theta))
    b3 = t2 * (3.9302962368947516 + theta * (-5.941033872131505
                                             + 2.490627285651253 * theta))
    b4 = t2 * (-12.411077166933676 + theta * (30.33818863028232
                                              - 16.548102889244902 * theta))
    b5 = t2 * (37.50931341651104 + theta * (-88.1789048947664
                                            + 47.37952196281928 * theta))
    b6 = t2 * (-27.896526289197286 + theta * (65.09189467479366
                                              - 34.87065786149661 * theta))
    b7 = t2 * (1.5 + theta * (-4.0 + 2.5 * theta))
    return (b1, b2, b3, b4, b5, b6, b7)


class RKSegment:
    """One accepted step's dense output: u(t0 + theta*h) from the slopes."""

    __slots__ = ("t0", "h", "y0", "ks")

    def __init__(self, t0, h, y0, ks):
        self.t0 = t0
        self.h = h
        self.y0 = y0
        self.ks = ks

    def eval(self, t):
        theta = (t - self.t0) / self.h
        w = _interp_weights(theta)
        acc = w[0] * self.ks[0]
        for b, k in zip(w[1:], self.ks[1:]):
            acc = acc + b * k
        return self.y0 + self.h * acc


class Tsit5:
    """Stepper: explicit 5(4) pair, FSAL, PI step control."""

    order = 5
    ctrl = (0.14, 0.08, 0.2, 5.0)

    def step(self, f, u, p, t, h, f0, cfg, prob, stats):
        ks = [f0]
        yi = u
        for i in range(1, 7):
            acc = _A[i][0] * ks[0]
            for a, k in zip(_A[i][1:], ks[1:]):
                acc = acc + a * k
            yi = u + h * acc
            ks.append(f(yi, p, t + _C[i] * h))
        # the b row equals the seventh stage's coefficients (FSAL)
        u_new = yi
        eacc = _BTILDE[0] * ks[0]
        for b, k in zip(_BTILDE[1:], ks[1:]):
            eacc = eacc + b * k
        err_vec = h * eacc
        err = _error_norm(err_vec, u, u_new, cfg)
        seg = RKSegment(t, h, u, ks)
        return u_new, err, ks[6], seg
