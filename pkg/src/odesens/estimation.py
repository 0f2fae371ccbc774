"""Recovering ODE parameters from trajectory data by gradient descent.

Synthetic datasets come from a tight-tolerance solve at the model's true
parameters; the objective is the plain sum of squared residuals over the data
grid.  Minimization is BFGS with a strong-Wolfe line search whose probes cost
one float solve each — the gradient, by whichever sensitivity method was
selected, is only evaluated at points that pass the sufficient-decrease test,
where it doubles as the next iterate's gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .models import ModelSpec
from .ode import IntegratorConfig, RetCode, solve
from .sensitivity import (
    CostSpec,
    SensitivityMethod,
    SolveFailedError,
    loss_gradient,
)

__all__ = [
    "Dataset",
    "OptResult",
    "generate_data",
    "l2_loss",
    "bfgs",
    "estimate",
]

_DATA_CFG = dict(reltol=1e-10, abstol=1e-12)


@dataclass(frozen=True)
class Dataset:
    """Observations on a time grid, with the parameters that produced them.

    ``observations[k]`` is the full state at ``times[k]``.  ``source_params``
    records the ground truth so recovery error can be measured; the estimator
    itself only ever sees the observations.
    """

    times: np.ndarray
    observations: np.ndarray
    source_params: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        obs = np.asarray(self.observations, dtype=float)
        if t.ndim != 1 or obs.ndim != 2 or obs.shape[0] != t.shape[0]:
            raise ValueError("observations must be one state row per time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(
            self,
            "source_params",
            np.asarray(self.source_params, dtype=float),
        )


@dataclass(frozen=True)
class OptResult:
    """Where the optimizer stopped and why.

    ``nf``/``njac`` total the right-hand-side and Jacobian evaluations spent
    across every solve of the run (gradient evaluations and cost-only line
    search probes alike).
    """

    p_final: np.ndarray
    cost_final: float
    iterations: int
    converged: bool
    grad_norm: float
    n_cost_evals: int = 0
    n_grad_evals: int = 0
    nf: int = 0
    njac: int = 0


def generate_data(model, n_points=None):
    """Noise-free observations of ``model`` at its true parameters.

    ``n_points`` evenly spaced times spanning the model's time span,
    endpoints included (default: the model's bundled data-grid size); the
    reference solve runs at relative tolerance 1e-10.
    """

    if n_points is None:
        n_points = model.estimation_defaults.n_data_points
    n_points = int(n_points)
    if n_points < 2:
        raise ValueError("a dataset needs at least 2 points")
    prob = model.problem
    times = np.linspace(float(prob.t0), float(prob.tf), n_points)
    cfg = IntegratorConfig(
        stiff=model.recommended_solver == "stiff", dense=False, **_DATA_CFG
    )
    sol = solve(prob, cfg, saveat=times)
    if sol.retcode != RetCode.SUCCESS:
        raise SolveFailedError(sol.retcode, "reference data solve")
    obs = np.array([np.asarray(u, dtype=float) for u in sol.saved[1]])
    return Dataset(
        times=times,
        observations=obs,
        source_params=np.asarray(prob.p, dtype=float),
    )


def l2_loss(model, p, data, cfg, counters=None):
    """Sum of squared residuals of ``model`` at parameters ``p``.

    A solve that fails to reach the end of the span — or blows up outright —
    scores ``+inf``, which a line search treats as an overshoot.  When
    ``counters`` (a dict with ``"nf"``/``"njac"`` keys) is given, the solve's
    evaluation counts are added to it.
    """

    prob = model.problem.with_params(np.asarray(p, dtype=float))
    try:
        sol = solve(prob, replace(cfg, dense=False), saveat=data.times)
    except ArithmeticError:
        return np.inf
    if counters is not None:
        counters["nf"] += sol.stats.nf
        counters["njac"] += sol.stats.njac
    if sol.retcode != RetCode.SUCCESS:
        return np.inf
    _, states = sol.saved
    if len(states) != data.times.shape[0]:
        return np.inf
    total = 0.0
    for k, u in enumerate(states):
        r = np.asarray(u, dtype=float) - data.observations[k]
        total += float(r @ r)
    return total


def _finite(x):
    return np.isfinite(x)


class _WolfeSearch:
    """Strong-Wolfe step selection along a fixed descent direction.

    Candidate steps are screened with the cheap cost function; the gradient
    is only computed once a candidate passes sufficient decrease, and the
    accepted step's gradient is handed back for reuse.
    """

    C1 = 1e-4
    C2 = 0.9
    MAX_PROBES = 30

    def __init__(self, fn_and_grad, cost_fn, counters):
        self.fn_and_grad = fn_and_grad
        self.cost_fn = cost_fn
        self.counters = counters

    def _phi(self, p, d, a):
        self.counters["cost"] += 1
        v = self.cost_fn(p + a * d)
        return v if _finite(v) else np.inf

    def _phi_grad(self, p, d, a):
        self.counters["grad"] += 1
        f, g = self.fn_and_grad(p + a * d)
        return f, g, float(g @ d)

    def search(self, p, d, f0, slope0):
        """Return ``(alpha, f, g)`` satisfying strong Wolfe, or ``None``."""
        c1, c2 = self.C1, self.C2
        a_prev, phi_prev = 0.0, f0
        a = 1.0
        a_max = 1e4
        for i in range(self.MAX_PROBES):
            phi_a = self._phi(p, d, a)
            if phi_a > f0 + c1 * a * slope0 or (i > 0 and phi_a >= phi_prev):
                return self._zoom(p, d, f0, slope0, a_prev, phi_prev, a)
            f_a, g_a, slope_a = self._phi_grad(p, d, a)
            if abs(slope_a) <= -c2 * slope0:
                return a, f_a, g_a
            if slope_a >= 0.0:
                return self._zoom(p, d, f0, slope0, a, f_a, a_prev)
            a_prev, phi_prev = a, phi_a
            a = min(2.0 * a, a_max)
            if a >= a_max:
                return None
        return None

    def _zoom(self, p, d, f0, slope0, lo, phi_lo, hi):
        c1, c2 = self.C1, self.C2
        for _ in range(self.MAX_PROBES):
            if not np.isfinite(hi):
                hi = lo + 1.0
            a = 0.5 * (lo + hi)
            if a == lo or a == hi:
                return None
            phi_a = self._phi(p, d, a)
            if phi_a > f0 + c1 * a * slope0 or phi_a >= phi_lo:
                hi = a
            else:
                f_a, g_a, slope_a = self._phi_grad(p, d, a)
                if abs(slope_a) <= -c2 * slope0:
                    return a, f_a, g_a
                if slope_a * (hi - lo) >= 0.0:
                    hi = lo
                lo, phi_lo = a, phi_a
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                return None
        return None


def bfgs(fn_and_grad, p0, gtol=1e-6, max_iters=200, cost_fn=None):
    """Quasi-Newton minimization with inverse-Hessian updates.

    ``fn_and_grad(p)`` returns ``(cost, gradient)``.  ``cost_fn`` is an
    optional cheaper cost-only evaluation used for line-search probes
    (default: ``fn_and_grad`` with the gradient discarded).  Convergence is
    declared when the gradient's max-norm drops to ``gtol``; a failed line
    search returns the best point seen with ``converged=False``.

    The initial inverse Hessian is the identity scaled by the inverse
    gradient norm, and the first successful step rescales it by the standard
    secant ratio before the first update.
    """

    p = np.asarray(p0, dtype=float).copy()
    counters = {"cost": 0, "grad": 1}
    if cost_fn is None:
        def cost_fn(q, _fg=fn_and_grad):
            return _fg(q)[0]

    f, g = fn_and_grad(p)
    g = np.asarray(g, dtype=float)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0

    def result(pp, ff, it, conv, gn):
        return OptResult(
            p_final=pp,
            cost_final=float(ff),
            iterations=it,
            converged=conv,
            grad_norm=float(gn),
            n_cost_evals=counters["cost"],
            n_grad_evals=counters["grad"],
        )

    if gnorm <= gtol:
        return result(p, f, 0, True, gnorm)
    n = p.size
    g2 = float(np.linalg.norm(g))
    H = np.eye(n) / g2
    eye = np.eye(n)
    search = _WolfeSearch(fn_and_grad, cost_fn, counters)
    best_p, best_f, best_g = p.copy(), f, gnorm

    for it in range(1, max_iters + 1):
        d = -(H @ g)
        slope = float(d @ g)
        if not slope < 0.0:
            # stale curvature; restart from the scaled identity
            H = eye / max(float(np.linalg.norm(g)), 1e-300)
            d = -(H @ g)
            slope = float(d @ g)
            if not slope < 0.0:
                return result(best_p, best_f, it - 1, False, best_g)
        hit = search.search(p, d, f, slope)
        if hit is None:
            return result(best_p, best_f, it - 1, False, best_g)
        a, f_new, g_new = hit
        g_new = np.asarray(g_new, dtype=float)
        s = a * d
        y = g_new - g
        sy = float(s @ y)
        if it == 1 and sy > 0.0:
            H = (sy / float(y @ y)) * eye
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        p = p + s
        f, g = f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        if f < best_f:
            best_p, best_f, best_g = p.copy(), f, gnorm
        if gnorm <= gtol:
            return result(p, f, it, True, gnorm)
    return result(best_p, best_f, max_iters, False, best_g)


def estimate(model, method, data, cfg=None, gtol=1e-6, max_iters=200):
    """Recover ``model``'s parameters from ``data`` by BFGS.

    The starting point comes from the model's bundled initial-guess rule
    applied to the dataset's source parameters; the gradient comes from
    ``method`` (a :class:`SensitivityMethod` or its command-line name).
    """

    if isinstance(method, str):
        method = SensitivityMethod.parse(method)
    if cfg is None:
        # tight enough that the solve-error floor under the data tolerance
        # stays below the gradient stopping test
        cfg = IntegratorConfig(
            reltol=1e-8,
            abstol=1e-10,
            stiff=model.recommended_solver == "stiff",
        )
    prob = model.problem
    cost = CostSpec.l2(data.times, data.observations)
    p0 = np.asarray(
        model.estimation_defaults.initial_guess_rule(data.source_params),
        dtype=float,
    )

    # Optimize relative to the guess's magnitudes: rate constants can span
    # ten orders of magnitude, and an unscaled quasi-Newton step leaves the
    # small ones frozen at their start values.
    scale = np.where(np.abs(p0) > 0.0, np.abs(p0), 1.0)
    z0 = p0 / scale
    work = {"nf": 0, "njac": 0}

    def fn_and_grad(z):
        res = loss_gradient(prob.with_params(scale * z), cfg, cost, method)
        work["nf"] += res.nf
        work["njac"] += res.njac
        return res.cost, res.grad * scale

    def cost_only(z):
        return l2_loss(model, scale * z, data, cfg, counters=work)

    r = bfgs(
        fn_and_grad, z0, gtol=gtol, max_iters=max_iters, cost_fn=cost_only
    )
    return OptResult(
        p_final=scale * r.p_final,
        cost_final=r.cost_final,
        iterations=r.iterations,
        converged=r.converged,
        grad_norm=r.grad_norm,
        n_cost_evals=r.n_cost_evals,
        n_grad_evals=r.n_grad_evals,
        nf=work["nf"],
        njac=work["njac"],
    )
