"""Generic ODE integration with events, dense output, and dual scalars.

The driver below is written against a small scalar protocol (arithmetic,
comparisons on values, a handful of elementary functions) rather than
against floats.  State vectors are numpy arrays that may be float or
object-dtype holding :class:`~odesens.dual.Dual` scalars; step size and
controller logic stay in floats.  Solving with duals whose partials are all
zero takes exactly the same float operations as the plain solve, so the two
paths produce bitwise-identical values.

Time is normally a float, but an event whose location depends on dual
inputs promotes it: the event time comes out of a final secant step done in
dual arithmetic, so its partials carry the implicit-function-theorem
derivative of the crossing time, and integration continues with a dual
``t``.  This is what lets forward-mode differentiation see how an event
time moves with the parameters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dual import Dual, value, values, width_of, partials

_EPS = np.finfo(float).eps


class RetCode(enum.Enum):
    SUCCESS = "success"
    MAXITERS = "maxiters"
    DTMIN = "dtmin"
    DOMAIN_ERROR = "domain_error"


@dataclass
class EventSpec:
    """Root-function event: fires when ``g(u, p, t)`` crosses zero.

    ``direction`` filters crossings: +1 fires only on sign change from
    negative to positive, -1 only on positive to negative, 0 on both.  The
    crossing test is strict, so a trajectory that touches zero without
    changing sign does not fire.  ``effect`` maps ``(u, p, t)`` to the new
    ``(u, p)`` applied at the located crossing time.  ``root_tol`` bounds
    the crossing-time bracket (default ``10*eps*max(1, |t|)``).
    """

    g: Callable
    effect: Optional[Callable] = None
    direction: int = 0
    root_tol: Optional[float] = None


@dataclass
class TimeEvent:
    """Effect applied at fixed times, e.g. scheduled doses."""

    times: tuple
    effect: Callable


@dataclass
class ODEProblem:
    """Initial value problem ``u' = f(u, p, t)`` on ``[t0, tf]``.

    ``jac`` is the state Jacobian ``df/du`` used by the stiff method; when
    absent it is formed by forward-mode differentiation of ``rhs``.
    ``autonomous=True`` promises ``f`` has no explicit smooth time
    dependence, letting the stiff method skip its time-derivative term.
    ``tstops`` forces step boundaries at given times without any effect
    (for known kinks such as a forcing switch).  ``u0_paramjac``, when
    given, supplies ``du0/dp`` for adjoint boundary terms.
    """

    rhs: Callable
    u0: np.ndarray
    p: np.ndarray
    t0: float
    tf: float
    jac: Optional[Callable] = None
    events: tuple = ()
    time_events: tuple = ()
    tstops: tuple = ()
    autonomous: bool = False
    u0_paramjac: Optional[Callable] = None

    def with_params(self, p):
        return replace(self, p=p)


@dataclass
class IntegratorConfig:
    """Tolerances and controls shared by both method families."""

    reltol: float = 1e-6
    abstol: float = 1e-6
    stiff: bool = False
    dtmax: Optional[float] = None
    dtmin: Optional[float] = None
    max_steps: int = 100000
    dense: bool = True
    norm_partials: bool = True
    controller: Optional[tuple] = None  # (beta1, beta2) PI gains override
    first_step: Optional[float] = None

    def __post_init__(self):
        if not self.abstol > 0.0:
            raise ValueError("abstol must be positive")
        if not 0.0 < self.reltol < 1.0:
            raise ValueError("reltol must be in (0, 1)")
        if (
            self.dtmin is not None
            and self.dtmax is not None
            and not self.dtmin < self.dtmax
        ):
            raise ValueError("dtmin must be smaller than dtmax")


@dataclass
class Stats:
    nf: int = 0
    njac: int = 0
    nsolve: int = 0
    naccept: int = 0
    nreject: int = 0
    nevents: int = 0


class _StepFailure(Exception):
    """Stage computation failed (e.g. singular stage matrix); retry smaller."""


@dataclass
class Solution:
    """Integration result: accepted knots, optional dense output, stats.

    ``us[k]`` is the state at ``ts[k]``; at an event time this is the
    post-effect state, while the dense segment ending there covers the
    pre-effect trajectory.  ``saved`` holds on-the-fly evaluations at the
    requested output times when ``saveat`` was passed to the solver.
    """

    ts: np.ndarray
    us: list
    stats: Stats
    retcode: RetCode
    segments: Optional[list] = None
    saved: Optional[tuple] = None
    events: list = field(default_factory=list)
    p_end: Optional[np.ndarray] = None

    @property
    def t_end(self):
        return self.ts[-1]

    @property
    def u_end(self):
        return self.us[-1]

    def interp(self, t):
        return interpolate(self, t)


def interpolate(sol, t):
    """State at time ``t`` from the solution's dense output.

    Exact knot times return the stored states (post-effect at events);
    interior times are evaluated on the covering segment.  Queries outside
    the integration span raise ``ValueError``.
    """
    if sol.segments is None:
        raise ValueError("solution was computed without dense output")
    ts = sol.ts
    tv = value(t)
    tiny = 64.0 * _EPS * max(1.0, abs(ts[0]), abs(ts[-1]))
    if tv < ts[0] - tiny or tv > ts[-1] + tiny:
        raise ValueError(
            f"time {tv} outside integration span [{ts[0]}, {ts[-1]}]"
        )
    k = int(np.searchsorted(ts, tv))
    for j in (k - 1, k, k + 1):
        if 0 <= j < len(ts) and abs(ts[j] - tv) <= tiny:
            return sol.us[j]
    k = min(max(k - 1, 0), len(sol.segments) - 1)
    return sol.segments[k].eval(t)


def _default_root_tol(lo, hi):
    return 10.0 * _EPS * max(1.0, abs(lo), abs(hi))


def _refine_root(phi, lo, hi, g_lo, g_hi, root_tol):
    """Narrow a sign-change bracket and return the root, generically.

    ``lo``/``hi`` are float bracket endpoints with generic (possibly dual)
    values ``g_lo``/``g_hi`` of opposite sign.  Bisection on float values
    narrows the bracket to ``root_tol`` and a float secant step gives the
    location.  The dual partials are taken from a secant over the
    narrowest bracket still wider than ~sqrt(eps): there the difference
    ``g_hi - g_lo`` is well above evaluation noise, so dividing by it
    gives the implicit derivative of the root to ~sqrt(eps) accuracy,
    whereas at width ``root_tol`` the same quotient would amplify
    cancellation noise into the partials.
    """
    v_lo, v_hi = value(g_lo), value(g_hi)
    deriv_w = max(root_tol, np.sqrt(_EPS) * max(1.0, abs(lo), abs(hi)))
    wide = (lo, hi, g_lo, g_hi)
    exact = None
    while hi - lo > root_tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = phi(mid)
        v_mid = value(g_mid)
        if v_mid == 0.0:
            exact = mid
            break
        if (v_lo < 0.0) == (v_mid < 0.0):
            lo, g_lo, v_lo = mid, g_mid, v_mid
        else:
            hi, g_hi, v_hi = mid, g_mid, v_mid
        if hi - lo >= deriv_w:
            wide = (lo, hi, g_lo, g_hi)
    if exact is not None:
        t_val = exact
    elif v_hi == v_lo:
        t_val = 0.5 * (lo + hi)
    else:
        t_val = hi - v_hi * (hi - lo) / (v_hi - v_lo)
        t_val = min(max(t_val, lo), hi)
    wl, wh, gwl, gwh = wide
    if not (isinstance(gwl, Dual) or isinstance(gwh, Dual)):
        return t_val
    denom = gwh - gwl
    if value(denom) == 0.0:
        return t_val
    t_wide = wh - gwh * (wh - wl) / denom
    if not isinstance(t_wide, Dual):
        return t_val
    return Dual(t_val, t_wide.partials)


def locate_event(g, bracket, root_tol=None):
    """Crossing time of scalar ``g(t)`` inside ``bracket``, or None.

    Returns None when the endpoint values show no strict sign change (no
    event is not an error).  The returned time inherits dual partials from
    ``g`` evaluations, carrying the crossing time's parameter dependence.
    """
    lo, hi = bracket
    lo_v, hi_v = value(lo), value(hi)
    if root_tol is None:
        root_tol = _default_root_tol(lo_v, hi_v)
    g_lo = g(lo)
    g_hi = g(hi)
    if value(g_lo) == 0.0:
        return lo
    if value(g_hi) == 0.0:
        return hi
    if (value(g_lo) < 0.0) == (value(g_hi) < 0.0):
        return None
    return _refine_root(g, lo_v, hi_v, g_lo, g_hi, root_tol)


def _with_value(x, v):
    """Replace the float value of a scalar, keeping dual partials."""
    if isinstance(x, Dual):
        return Dual(v, x.partials)
    return v


def _error_norm(err, u_old, u_new, cfg):
    """Scaled RMS step error over states, folding in dual partials.

    Each state contributes its value error plus (unless disabled) every
    partial slot's error, each with its own tolerance weight.  States whose
    partials are zero contribute exactly the float-path term, which keeps
    the zero-seed solve bitwise identical to the float solve.
    """
    at, rt = cfg.abstol, cfg.reltol
    err = np.asarray(err)
    u_old = np.asarray(u_old)
    u_new = np.asarray(u_new)
    n = err.shape[0]
    if (
        err.dtype != object
        and u_old.dtype != object
        and u_new.dtype != object
    ):
        w = at + rt * np.maximum(np.abs(u_old), np.abs(u_new))
        acc = (err / w) ** 2
        return float(np.sqrt(np.sum(acc) / n))
    acc = np.empty(n)
    for i in range(n):
        e, a, b = err[i], u_old[i], u_new[i]
        ev, av, bv = value(e), value(a), value(b)
        w = at + rt * max(abs(av), abs(bv))
        c = (ev / w) ** 2
        if cfg.norm_partials:
            wd = width_of_scalar(e)
            if wd:
                ep = e.partials
                ap = partials(a, wd)
                bp = partials(b, wd)
                wp = at + rt * np.maximum(np.abs(ap), np.abs(bp))
                c += float(np.sum((ep / wp) ** 2))
        acc[i] = c
    return float(np.sqrt(np.sum(acc) / n))


def width_of_scalar(x):
    if isinstance(x, Dual):
        return x.partials.shape[0]
    return 0


def _initial_step(f, u0, p, t0, tf, f0, order, cfg, stats):
    """Step-size guess from local derivative scales (two cheap probes)."""
    uv = values(u0)
    fv = values(f0)
    pv = values(p)
    at, rt = cfg.abstol, cfg.reltol
    span = abs(tf - value(t0))
    w = at + rt * np.abs(uv)
    d0 = float(np.sqrt(np.mean((uv / w) ** 2)))
    d1 = float(np.sqrt(np.mean((fv / w) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    u1 = uv + h0 * fv
    f1 = values(np.asarray(f(u1, pv, value(t0) + h0)))
    d2 = float(np.sqrt(np.mean(((f1 - fv) / w) ** 2))) / h0
    m = max(d1, d2)
    if m <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / m) ** (1.0 / (order + 1.0))
    h = min(100.0 * h0, h1, span)
    if cfg.dtmax is not None:
        h = min(h, cfg.dtmax)
    return h


def _merged_stops(prob, tiny):
    """Sorted (time, [effects]) pairs inside the open span (t0, tf]."""
    t0v, tfv = value(prob.t0), value(prob.tf)
    stops = {}
    for te in prob.time_events:
        for tt in te.times:
            tt = float(tt)
            if t0v + tiny < tt <= tfv + tiny:
                stops.setdefault(tt, []).append(te.effect)
    for tt in prob.tstops:
        tt = float(tt)
        if t0v + tiny < tt <= tfv + tiny:
            stops.setdefault(tt, [])
    return sorted(stops.items())


def _integrate(prob, cfg, stepper, saveat=None):
    stats = Stats()

    def f(u, p, t):
        stats.nf += 1
        return np.asarray(prob.rhs(u, p, t))

    t = prob.t0
    tfv = value(prob.tf)
    tiny = 64.0 * _EPS * max(1.0, abs(value(t)), abs(tfv))
    u = np.array(prob.u0, dtype=prob.u0.dtype, copy=True)
    p = np.array(prob.p, copy=True)
    span = tfv - value(t)
    if span <= 0:
        raise ValueError("tf must exceed t0")

    dtmin = cfg.dtmin if cfg.dtmin is not None else 16.0 * tiny
    dtmax = cfg.dtmax if cfg.dtmax is not None else span

    stops = _merged_stops(prob, tiny)
    stop_idx = 0

    save_times = None
    save_states = None
    save_idx = 0
    if saveat is not None:
        save_times = np.asarray(saveat, dtype=float)
        if np.any(np.diff(save_times) <= 0):
            raise ValueError("saveat times must be strictly increasing")
        save_states = []
        while save_idx < len(save_times) and save_times[save_idx] <= value(t) + tiny:
            save_states.append(u.copy())
            save_idx += 1

    f0 = f(u, p, t)
    h = cfg.first_step
    if h is None:
        h = _initial_step(f, u, p, t, prob.tf, f0, stepper.order, cfg, stats)
    h = float(min(max(h, dtmin), dtmax))

    beta1, beta2, minfac, maxfac = stepper.ctrl
    if cfg.controller is not None:
        beta1, beta2 = cfg.controller
    safety = 0.9
    err_prev = 1.0
    just_rejected = False

    ts = [value(t)]
    us = [u.copy()]
    segments = [] if cfg.dense else None
    event_log = []
    retcode = None

    g_cache = [ev.g(u, p, t) for ev in prob.events]

    def reinit_after_jump(fired_event=None):
        nonlocal f0, h, err_prev, just_rejected, g_cache
        f0 = f(u, p, t)
        h = _initial_step(f, u, p, t, prob.tf, f0, stepper.order, cfg, stats)
        h = float(min(max(h, dtmin), dtmax))
        err_prev = 1.0
        just_rejected = False
        g_cache = [ev.g(u, p, t) for ev in prob.events]
        if fired_event is not None:
            # The root just located leaves a tiny residue of either sign in
            # g; treat it as exactly zero so the same root cannot re-fire on
            # the next segment.
            g_cache[fired_event] = 0.0

    def record_saves(seg, t_hi_v, t_exact_state):
        """Consume save times in (prev, t_hi]; exact hits use the knot state."""
        nonlocal save_idx
        if save_times is None:
            return
        while save_idx < len(save_times) and save_times[save_idx] <= t_hi_v + tiny:
            st = save_times[save_idx]
            if abs(st - t_hi_v) <= tiny:
                save_states.append(t_exact_state.copy())
            else:
                save_states.append(np.asarray(seg.eval(st)))
            save_idx += 1

    while True:
        tv = value(t)
        if tv >= tfv - tiny:
            retcode = RetCode.SUCCESS
            break
        if stats.naccept + stats.nreject >= cfg.max_steps:
            retcode = RetCode.MAXITERS
            break

        h = min(h, dtmax)
        next_stop_t = tfv
        while stop_idx < len(stops) and stops[stop_idx][0] <= tv + tiny:
            stop_idx += 1
        if stop_idx < len(stops):
            next_stop_t = min(next_stop_t, stops[stop_idx][0])

        if tv + 1.05 * h >= next_stop_t - tiny:
            h_step = next_stop_t - t
            hit_stop = True
        else:
            h_step = h
            hit_stop = False
        if value(h_step) < dtmin:
            retcode = RetCode.DTMIN
            break

        try:
            u_new, err, f_new, seg = stepper.step(
                f, u, p, t, h_step, f0, cfg, prob, stats
            )
        except _StepFailure:
            u_new, err, f_new, seg = None, np.inf, None, None

        if not np.isfinite(err):
            stats.nreject += 1
            if h <= 2.0 * dtmin:
                retcode = RetCode.DOMAIN_ERROR
                break
            h = max(0.25 * h, dtmin)
            just_rejected = True
            continue

        if err > 1.0:
            stats.nreject += 1
            fac = safety * err ** (-1.0 / (stepper.order + 0.0))
            h_want = float(value(h_step)) * min(max(fac, minfac), 1.0)
            if h_want < dtmin and float(value(h_step)) <= dtmin * (1.0 + 1e-12):
                # already at the floor and the controller wants smaller
                retcode = RetCode.DTMIN
                break
            h = max(h_want, dtmin)
            just_rejected = True
            continue

        # accepted
        stats.naccept += 1
        t_new = t + h_step
        if hit_stop:
            t_new = _with_value(t_new, next_stop_t)

        # root-function events on the fresh segment
        g_new = [ev.g(u_new, p, t_new) for ev in prob.events]
        fired = None
        for i, ev in enumerate(prob.events):
            a, b = value(g_cache[i]), value(g_new[i])
            if ev.direction >= 0 and a < 0.0 and b > 0.0:
                crossed = True
            elif ev.direction <= 0 and a > 0.0 and b < 0.0:
                crossed = True
            else:
                crossed = False
            if crossed:

                def phi(tau, _ev=ev):
                    return _ev.g(seg.eval(tau), p, tau)

                rt = ev.root_tol
                if rt is None:
                    rt = _default_root_tol(value(t), value(t_new))
                t_star = _refine_root(
                    phi, value(t), value(t_new), g_cache[i], g_new[i], rt
                )
                if fired is None or value(t_star) < value(fired[1]):
                    fired = (i, t_star)

        if fired is not None:
            i, t_star = fired
            ev = prob.events[i]
            u_star = np.asarray(seg.eval(t_star))
            record_saves(seg, value(t_star), u_star)
            if ev.effect is not None:
                u_star, p = ev.effect(u_star, p, t_star)
                u_star = np.asarray(u_star)
                p = np.asarray(p)
            t = t_star
            u = u_star
            stats.nevents += 1
            event_log.append((value(t_star), i))
            ts.append(value(t))
            us.append(u.copy())
            if segments is not None:
                segments.append(seg)
            # saveat entries exactly at the event time should see the
            # post-effect state, matching the knot convention
            if save_times is not None and save_states:
                k = save_idx - 1
                if k >= 0 and abs(save_times[k] - value(t)) <= tiny:
                    save_states[k] = u.copy()
            reinit_after_jump(fired_event=i)
            continue

        t = t_new
        u = u_new
        f0 = f_new
        g_cache = g_new
        ts.append(value(t))
        us.append(u.copy())
        if segments is not None:
            segments.append(seg)
        record_saves(seg, value(t), u)

        dosed = False
        if hit_stop and stop_idx < len(stops) and stops[stop_idx][0] == next_stop_t:
            for effect in stops[stop_idx][1]:
                u, p = effect(u, p, t)
                u = np.asarray(u)
                p = np.asarray(p)
                dosed = True
            stop_idx += 1
            if dosed:
                stats.nevents += 1
                event_log.append((value(t), None))
                us[-1] = u.copy()
                if save_times is not None and save_states:
                    k = save_idx - 1
                    if k >= 0 and abs(save_times[k] - value(t)) <= tiny:
                        save_states[k] = u.copy()
                reinit_after_jump()
                continue

        if err == 0.0:
            fac = maxfac
        else:
            fac = safety * err ** (-beta1) * err_prev ** beta2
        if just_rejected:
            fac = min(fac, 1.0)
        h = float(value(h_step)) * min(max(fac, minfac), maxfac)
        h = max(h, dtmin)
        err_prev = max(err, 1e-10)
        just_rejected = False

    if retcode is None:  # pragma: no cover - loop always sets one
        retcode = RetCode.DOMAIN_ERROR
    saved = None
    if save_times is not None:
        saved = (save_times[: len(save_states)], save_states)
    return Solution(
        ts=np.asarray(ts, dtype=float),
        us=us,
        stats=stats,
        retcode=retcode,
        segments=segments,
        saved=saved,
        events=event_log,
        p_end=p,
    )


def solve_explicit(prob, cfg, saveat=None):
    """Integrate with the explicit Runge-Kutta 5(4) method."""
    from .tsit5 import Tsit5

    return _integrate(prob, cfg, Tsit5(), saveat=saveat)


def solve_stiff(prob, cfg, jac=None, saveat=None):
    """Integrate with the stiffly accurate Rosenbrock method.

    ``jac`` overrides the problem's Jacobian; without either, the Jacobian
    is formed by forward-mode differentiation of the right-hand side.
    """
    from .rodas import Rodas4

    if jac is not None:
        prob = replace(prob, jac=jac)
    return _integrate(prob, cfg, Rodas4(), saveat=saveat)


def solve(prob, cfg, saveat=None):
    """Integrate with the method family selected by ``cfg.stiff``."""
    if cfg.stiff:
        return solve_stiff(prob, cfg, saveat=saveat)
    return solve_explicit(prob, cfg, saveat=saveat)
