"""Four routes to ``dU/dp`` for ODE solutions, sharing one solver stack.

* :func:`dsaad_forward` — differentiate *through* the solver by seeding the
  parameters with dual numbers.  Step sizes, rejections, and event times all
  carry derivatives, so state jumps triggered by root crossings are handled
  exactly.
* :func:`csa_forward` — append the classical forward sensitivity equations
  ``s_i' = (df/du) s_i + df/dp_i`` to the state and integrate the extended
  system with plain floats.  State jumps pass through the sensitivity blocks
  unchanged, which is wrong whenever an event time depends on the parameters;
  the result carries a warning flag in that case (the behaviour is kept
  deliberately so the failure mode can be demonstrated).
* :func:`casa_adjoint` — reverse (adjoint) accumulation of a scalar data
  mismatch: one forward solve, one backward solve of
  ``lambda' = -lambda (df/du)`` with jumps at the data times, and a quadrature
  of ``lambda (df/dp)`` per data segment.  Cost grows with the state
  dimension, not with the parameter count.
* :func:`numdiff` — finite differences of repeated solves, the baseline the
  other routes are judged against.

``loss_gradient`` turns any of the four into the gradient of a sum of
per-data-time costs, which is what parameter estimation consumes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .dual import (
    dual_array,
    jacobian,
    jvp,
    partials_matrix,
    plan_chunks,
    seed_array,
    value,
    values,
)
from .ode import (
    EventSpec,
    IntegratorConfig,
    ODEProblem,
    RetCode,
    Solution,
    TimeEvent,
    interpolate,
    solve,
    solve_stiff,
)
from .quad import QuadratureError, adaptive
from .rodas import CoupledBlockJacobian
from .tape import TapeBranchError, VJPStrategy, record, reuse_tape
from .tape import vjp as tape_vjp

__all__ = [
    "EVENT_WARNING",
    "JacStrategy",
    "VJPStrategy",
    "SensitivityMethod",
    "SensitivityResult",
    "GradientResult",
    "CostSpec",
    "SolveFailedError",
    "all_methods",
    "dsaad_forward",
    "csa_forward",
    "casa_adjoint",
    "numdiff",
    "compute_sensitivities",
    "loss_gradient",
]

_EPS = float(np.finfo(float).eps)

EVENT_WARNING = (
    "state-jump events pass through the appended sensitivity equations "
    "unchanged; contributions from parameter-dependent event times are dropped"
)


class SolveFailedError(RuntimeError):
    """An underlying integration did not reach the end of the span."""

    def __init__(self, retcode, context):
        super().__init__(f"{context}: solver returned {retcode.value!r}")
        self.retcode = retcode


class JacStrategy(enum.Enum):
    """How ``(df/du) s`` is formed inside the forward sensitivity system."""

    USER = "user"
    AD_FULL = "ad-jac"
    AD_JV = "ad-jv"


@dataclass(frozen=True)
class SensitivityMethod:
    """A named derivative strategy plus its per-strategy options.

    Use the constructors (:meth:`dsaad`, :meth:`csa`, :meth:`casa`,
    :meth:`numdiff`) or :meth:`parse` on a command-line name such as
    ``"csa-ad-jv"``.
    """

    kind: str
    jac: Optional[JacStrategy] = None
    vjp: Optional[VJPStrategy] = None
    scheme: Optional[str] = None
    chunk: Optional[int] = None

    @staticmethod
    def dsaad(chunk=None):
        return SensitivityMethod("dsaad", chunk=chunk)

    @staticmethod
    def csa(jac=JacStrategy.AD_FULL):
        return SensitivityMethod("csa", jac=JacStrategy(jac))

    @staticmethod
    def casa(vjp=VJPStrategy.AD_VJP):
        return SensitivityMethod("casa", vjp=VJPStrategy(vjp))

    @staticmethod
    def numdiff(scheme="central"):
        if scheme not in ("forward", "central"):
            raise ValueError("scheme must be 'forward' or 'central'")
        return SensitivityMethod("numdiff", scheme=scheme)

    @property
    def cli_name(self):
        if self.kind == "dsaad":
            return "dsaad"
        if self.kind == "csa":
            return f"csa-{self.jac.value}"
        if self.kind == "casa":
            return f"casa-{self.vjp.value}"
        return f"numdiff-{self.scheme}"

    @staticmethod
    def parse(name):
        table = {m.cli_name: m for m in all_methods()}
        try:
            return table[name]
        except KeyError:
            known = ", ".join(sorted(table))
            raise ValueError(
                f"unknown method {name!r}; expected one of: {known}"
            ) from None

    def __str__(self):
        return self.cli_name


def all_methods():
    """Every selectable method, in the order used by reports."""
    return (
        SensitivityMethod.dsaad(),
        SensitivityMethod.csa(JacStrategy.USER),
        SensitivityMethod.csa(JacStrategy.AD_FULL),
        SensitivityMethod.csa(JacStrategy.AD_JV),
        SensitivityMethod.casa(VJPStrategy.USER),
        SensitivityMethod.casa(VJPStrategy.AD_JACOBIAN),
        SensitivityMethod.casa(VJPStrategy.AD_VJP),
        SensitivityMethod.numdiff("forward"),
        SensitivityMethod.numdiff("central"),
    )


@dataclass(frozen=True)
class SensitivityResult:
    """Trajectory derivatives on an output grid.

    ``sens[k, i, j]`` is ``du_i/dp_j`` at ``times[k]``; ``values[k, i]`` is
    the base trajectory on the same grid.  ``base`` is the solver output the
    derivatives were extracted from (``None`` for the central scheme, which
    never solves at the unperturbed point).  ``invalid_params`` lists
    parameter indices whose finite-difference column could not be computed;
    those columns are NaN.
    """

    times: np.ndarray
    sens: np.ndarray
    base: Optional[Solution]
    values: np.ndarray
    n_solves: int
    warnings: tuple = ()
    invalid_params: tuple = ()
    nf: int = 0
    njac: int = 0


@dataclass(frozen=True)
class GradientResult:
    """Gradient of a scalar data-mismatch cost, with the cost itself.

    ``nf`` counts right-hand-side evaluations across every solve involved
    (for the adjoint route this includes the quadrature's integrand points);
    ``njac`` counts Jacobian evaluations.
    """

    grad: np.ndarray
    cost: float
    n_solves: int = 0
    warnings: tuple = ()
    nf: int = 0
    njac: int = 0


@dataclass(frozen=True)
class CostSpec:
    """A cost of the form ``sum_k c(u(t_k), k)`` over fixed data times.

    ``point_cost(u, k)`` returns the scalar contribution at data index ``k``
    and ``point_grad(u, k)`` its gradient with respect to the state; both are
    called with plain float states.
    """

    times: np.ndarray
    point_cost: Callable
    point_grad: Callable

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("cost needs a non-empty 1-D array of data times")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("data times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @staticmethod
    def l2(times, observations):
        """Sum of squared residuals against an observation matrix."""
        obs = np.asarray(observations, dtype=float)
        times = np.asarray(times, dtype=float)
        if obs.ndim != 2 or obs.shape[0] != times.shape[0]:
            raise ValueError(
                "observations must be one row per data time"
            )

        def point_cost(u, k):
            r = np.asarray(u, dtype=float) - obs[k]
            return float(r @ r)

        def point_grad(u, k):
            return 2.0 * (np.asarray(u, dtype=float) - obs[k])

        return CostSpec(times, point_cost, point_grad)

    def total(self, states):
        """Cost summed over the grid given states row-per-data-time."""
        return float(
            sum(self.point_cost(states[k], k) for k in range(self.times.size))
        )


def _check_out_times(prob, out_times):
    t = np.asarray(out_times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("out_times must be a non-empty 1-D array")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("out_times must be strictly increasing")
    lo, hi = float(prob.t0), float(prob.tf)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if t[0] < lo - tol or t[-1] > hi + tol:
        raise ValueError(
            f"out_times must lie within the integration span [{lo}, {hi}]"
        )
    return np.clip(t, lo, hi)


def _require_success(sol, context):
    if sol.retcode != RetCode.SUCCESS:
        raise SolveFailedError(sol.retcode, context)


def _saved_states(sol, n_times):
    ts, us = sol.saved
    if len(us) != n_times:
        raise SolveFailedError(
            sol.retcode, "solver stopped before reaching every output time"
        )
    return us


# ---------------------------------------------------------------------------
# discrete forward: dual numbers through the full solver
# ---------------------------------------------------------------------------


def dsaad_forward(prob, cfg, out_times, chunk=None):
    """Trajectory sensitivities by dual-seeding the parameters.

    The solver runs on dual numbers, so everything downstream of the
    parameters — step sizes, accepted/rejected steps, interpolation
    coefficients, event times, state jumps — is differentiated.  ``chunk``
    bounds the dual width per sweep; the full parameter set is covered by
    ``ceil(P / chunk)`` solves whose value parts are bitwise identical.
    """

    out_times = _check_out_times(prob, out_times)
    pv = values(np.asarray(prob.p))
    u0v = values(np.asarray(prob.u0))
    n, n_param = u0v.shape[0], pv.shape[0]
    n_times = out_times.shape[0]

    s0_full = None
    if prob.u0_paramjac is not None:
        s0_full = np.asarray(prob.u0_paramjac(pv), dtype=float)

    sens = np.zeros((n_times, n, n_param))
    vals = np.zeros((n_times, n))
    base = None
    nf = njac = 0
    plans = plan_chunks(n_param, chunk)
    for plan in plans:
        slots = [-1] * n_param
        for j in range(plan.start, plan.stop):
            slots[j] = j - plan.start
        p_seed = seed_array(pv, plan.width, slots)
        if s0_full is not None:
            u0_seed = dual_array(u0v, s0_full[:, plan.start : plan.stop])
        else:
            u0_seed = u0v.copy()
        sub = replace(prob, u0=u0_seed, p=p_seed)
        sol = solve(sub, replace(cfg, dense=False), saveat=out_times)
        nf += sol.stats.nf
        njac += sol.stats.njac
        _require_success(sol, f"seeded sweep {plan.chunk_index}")
        states = _saved_states(sol, n_times)
        for k, u in enumerate(states):
            sens[k][:, plan.start : plan.stop] = partials_matrix(
                u, plan.width
            )
            if plan.chunk_index == 0:
                vals[k] = values(u)
        if plan.chunk_index == 0:
            base = sol
    return SensitivityResult(
        times=out_times,
        sens=sens,
        base=base,
        values=vals,
        n_solves=len(plans),
        nf=nf,
        njac=njac,
    )


# ---------------------------------------------------------------------------
# continuous forward: the appended sensitivity system
# ---------------------------------------------------------------------------


def _wrap_events(prob, n, n_param):
    """Lift the problem's events onto the extended state vector."""

    def lift(effect):
        if effect is None:
            return None

        def effect_ext(U, q, t):
            u_new, q_new = effect(U[:n], q, t)
            U_new = U.copy()
            U_new[:n] = u_new
            return U_new, q_new

        return effect_ext

    events = tuple(
        EventSpec(
            g=(lambda ev: lambda U, q, t: ev.g(U[:n], q, t))(ev),
            effect=lift(ev.effect),
            direction=ev.direction,
            root_tol=ev.root_tol,
        )
        for ev in prob.events
    )
    time_events = tuple(
        TimeEvent(times=tev.times, effect=lift(tev.effect))
        for tev in prob.time_events
    )
    return events, time_events


def csa_forward(prob, cfg, out_times, jac_strategy=JacStrategy.AD_FULL):
    """Trajectory sensitivities from the appended continuous system.

    The state is extended to ``[u, s_1, ..., s_P]`` and the whole block
    system is integrated once with plain floats.  ``jac_strategy`` picks how
    ``(df/du) s_i`` is formed: the problem's analytic Jacobian, a
    forward-mode dense Jacobian, or one directional derivative per column.
    ``df/dp`` always comes from one forward-mode sweep over the parameters.

    Stiff integration exploits the block lower-triangular structure of the
    extended Jacobian: one ``n x n`` factorization per step solves every
    block, and the couplings between the state and its sensitivities enter
    as directional differences so the stage matrix stays exact (an inexact
    one wrecks the stepper's order and inflates the step count).
    """

    jac_strategy = JacStrategy(jac_strategy)
    out_times = _check_out_times(prob, out_times)
    pv = values(np.asarray(prob.p))
    u0v = values(np.asarray(prob.u0))
    n, n_param = u0v.shape[0], pv.shape[0]
    n_times = out_times.shape[0]
    rhs = prob.rhs

    if jac_strategy is JacStrategy.USER and prob.jac is None:
        raise ValueError(
            "jac_strategy 'user' needs a problem with an analytic Jacobian"
        )

    def state_jac(u, q, t):
        if jac_strategy is JacStrategy.USER:
            return np.asarray(prob.jac(u, q, t), dtype=float)
        return jacobian(rhs, u, q, t, wrt="state")

    def lower_part(u, S, q, t):
        """The appended blocks ``(df/du) s_j + df/dp_j``, one per column."""
        f_p = jacobian(rhs, u, q, t, wrt="params")
        if jac_strategy is JacStrategy.AD_JV:
            G = np.empty((n, n_param))
            for j in range(n_param):
                G[:, j] = jvp(rhs, u, q, t, S[:, j])
            return G + f_p
        return state_jac(u, q, t) @ S + f_p

    def rhs_ext(U, q, t):
        u = U[:n]
        S = U[n:].reshape(n_param, n).T
        out = np.empty((1 + n_param) * n, dtype=float)
        out[:n] = rhs(u, q, t)
        out[n:] = lower_part(u, S, q, t).T.ravel()
        return out

    U0 = np.zeros((1 + n_param) * n)
    U0[:n] = u0v
    if prob.u0_paramjac is not None:
        s0 = np.asarray(prob.u0_paramjac(pv), dtype=float)
        U0[n:] = s0.T.ravel()

    events, time_events = _wrap_events(prob, n, n_param)
    ext = ODEProblem(
        rhs=rhs_ext,
        u0=U0,
        p=pv,
        t0=prob.t0,
        tf=prob.tf,
        events=events,
        time_events=time_events,
        tstops=prob.tstops,
        autonomous=prob.autonomous,
    )

    if cfg.stiff:
        def jac_ext(U, q, t):
            u = values(U[:n])
            S = values(U[n:]).reshape(n_param, n).T
            J = state_jac(u, q, t)

            def coupling(x0):
                # directional difference of the appended blocks along x0:
                # the exact couplings d((df/du) s_j + df/dp_j)/du @ x0
                # to rounding-limited accuracy
                nrm = float(np.linalg.norm(x0))
                if nrm == 0.0:
                    return np.zeros((n, n_param))
                h = np.sqrt(_EPS) * (1.0 + float(np.linalg.norm(u))) / nrm
                g_hi = lower_part(u + h * x0, S, q, t)
                g_lo = lower_part(u - h * x0, S, q, t)
                return (g_hi - g_lo) / (2.0 * h)

            return CoupledBlockJacobian(J, 1 + n_param, coupling)

        sol = solve_stiff(
            ext, replace(cfg, dense=False), jac=jac_ext, saveat=out_times
        )
    else:
        sol = solve(ext, replace(cfg, dense=False), saveat=out_times)
    _require_success(sol, "extended sensitivity system")
    states = _saved_states(sol, n_times)

    sens = np.zeros((n_times, n, n_param))
    vals = np.zeros((n_times, n))
    for k, U in enumerate(states):
        Uv = values(U)
        vals[k] = Uv[:n]
        sens[k] = Uv[n:].reshape(n_param, n).T
    warn = (EVENT_WARNING,) if prob.events else ()
    return SensitivityResult(
        times=out_times,
        sens=sens,
        base=sol,
        values=vals,
        n_solves=1,
        warnings=warn,
        nf=sol.stats.nf,
        njac=sol.stats.njac,
    )


# ---------------------------------------------------------------------------
# continuous reverse: the adjoint pass
# ---------------------------------------------------------------------------


class _RhsPullback:
    """Reverse-mode products ``w (df/du)`` and ``w (df/dp)`` via the tape.

    The tape is recorded once and replayed at each new point; a flipped
    branch guard (a comparison that resolves differently) triggers a fresh
    recording.
    """

    def __init__(self, rhs, n, n_param):
        self.rhs = rhs
        self.n = n
        self.n_param = n_param
        self.tape = None

    def _refresh(self, u, p, t):
        if self.tape is None:
            self.tape = record(self.rhs, u, p, t)
            return
        try:
            reuse_tape(self.tape, u, p, t)
        except TapeBranchError:
            self.tape = record(self.rhs, u, p, t)

    def wrt_state(self, w, u, p, t):
        self._refresh(u, p, t)
        return tape_vjp(self.tape, w).wrt_state

    def wrt_params(self, w, u, p, t):
        self._refresh(u, p, t)
        return tape_vjp(self.tape, w).wrt_params


def casa_adjoint(
    prob,
    cfg,
    cost,
    vjp_strategy=VJPStrategy.AD_VJP,
    quad_tol=None,
):
    """Gradient of a data-mismatch cost by the continuous adjoint.

    One forward solve stores a dense trajectory; the adjoint state is then
    integrated backward between consecutive data times, picking up the jump
    ``dc/du`` at each, and the parameter gradient is accumulated as the
    quadrature of ``lambda (df/dp)`` over every segment (plus an initial-state
    term when ``u0`` depends on the parameters).  ``vjp_strategy`` picks how
    ``lambda (df/du)`` is formed for the backward integration: the transposed
    analytic Jacobian, a transposed forward-mode Jacobian, or one reverse
    sweep of the recorded right-hand side.  ``quad_tol`` is the relative
    tolerance of the segment quadratures (default: the integrator's).
    """

    vjp_strategy = VJPStrategy(vjp_strategy)
    data_times = _check_out_times(prob, cost.times)
    pv = values(np.asarray(prob.p))
    u0v = values(np.asarray(prob.u0))
    n, n_param = u0v.shape[0], pv.shape[0]
    rhs = prob.rhs
    if vjp_strategy is VJPStrategy.USER and prob.jac is None:
        raise ValueError(
            "vjp_strategy 'user' needs a problem with an analytic Jacobian"
        )
    rtol_q = float(quad_tol) if quad_tol is not None else float(cfg.reltol)

    fwd = solve(
        replace(prob, u0=u0v, p=pv),
        replace(cfg, dense=True),
        saveat=data_times,
    )
    _require_success(fwd, "forward pass")
    data_states = [values(u) for u in _saved_states(fwd, data_times.size)]
    cost_value = cost.total(data_states)
    counters = {"nf": fwd.stats.nf, "njac": fwd.stats.njac}

    pullback = None
    if vjp_strategy is VJPStrategy.AD_VJP:
        pullback = _RhsPullback(rhs, n, n_param)

    def lam_dot(w, u, t):
        """Row-vector product ``w (df/du)`` at the stored trajectory point."""
        if vjp_strategy is VJPStrategy.USER:
            J = np.asarray(prob.jac(u, pv, t), dtype=float)
            return w @ J
        if vjp_strategy is VJPStrategy.AD_JACOBIAN:
            return w @ jacobian(rhs, u, pv, t, wrt="state")
        return pullback.wrt_state(w, u, pv, t)

    def param_dot(w, u, t):
        """Row-vector product ``w (df/dp)`` at the stored trajectory point."""
        if vjp_strategy is VJPStrategy.AD_VJP:
            return pullback.wrt_params(w, u, pv, t)
        return w @ jacobian(rhs, u, pv, t, wrt="params")

    def backward_segment(lam_right, t_left, t_right, tag):
        """Integrate the adjoint from ``t_right`` down to ``t_left``."""

        def mu_rhs(mu, q, s):
            u = values(interpolate(fwd, t_right - s))
            return lam_dot(mu, u, t_right - s)

        mu_jac = None
        if cfg.stiff:
            def mu_jac(mu, q, s):
                u = values(interpolate(fwd, t_right - s))
                if vjp_strategy is VJPStrategy.USER:
                    J = np.asarray(
                        prob.jac(u, pv, t_right - s), dtype=float
                    )
                else:
                    J = jacobian(rhs, u, pv, t_right - s, wrt="state")
                return J.T

        back = ODEProblem(
            rhs=mu_rhs,
            u0=lam_right,
            p=pv,
            t0=0.0,
            tf=t_right - t_left,
            jac=mu_jac,
            autonomous=False,
        )
        sol = solve(back, replace(cfg, dense=True))
        counters["nf"] += sol.stats.nf
        counters["njac"] += sol.stats.njac
        _require_success(sol, tag)
        return sol

    grad = np.zeros(n_param)
    lam = np.zeros(n)
    n_solves = 1
    right = float(prob.tf)
    tol = 1e-12 * max(1.0, abs(right), abs(float(prob.t0)))
    for k in range(data_times.size - 1, -1, -1):
        t_k = float(data_times[k])
        if right - t_k > tol:
            tag = f"adjoint segment [{t_k:g}, {right:g}]"
            if np.any(lam != 0.0):
                back = backward_segment(lam, t_k, right, tag)
                n_solves += 1
                t_r = right

                def integrand(t, back=back, t_r=t_r):
                    counters["nf"] += 1
                    u = values(interpolate(fwd, t))
                    w = values(back.interp(t_r - t))
                    return param_dot(w, u, t)

                try:
                    q = adaptive(
                        integrand, t_k, right, atol=1e-14, rtol=rtol_q
                    )
                except QuadratureError as exc:
                    raise QuadratureError(
                        f"{tag}: {exc}", exc.result
                    ) from exc
                grad += q.value
                lam = values(back.u_end)
            # lam == 0 integrates to itself; the segment contributes nothing
        lam = lam + cost.point_grad(data_states[k], k)
        right = t_k
    if right - float(prob.t0) > tol and np.any(lam != 0.0):
        tag = f"adjoint segment [{float(prob.t0):g}, {right:g}]"
        back = backward_segment(lam, float(prob.t0), right, tag)
        n_solves += 1
        t_r = right

        def integrand(t, back=back, t_r=t_r):
            counters["nf"] += 1
            u = values(interpolate(fwd, t))
            w = values(back.interp(t_r - t))
            return param_dot(w, u, t)

        try:
            q = adaptive(
                integrand, float(prob.t0), right, atol=1e-14, rtol=rtol_q
            )
        except QuadratureError as exc:
            raise QuadratureError(f"{tag}: {exc}", exc.result) from exc
        grad += q.value
        lam = values(back.u_end)
    if prob.u0_paramjac is not None:
        s0 = np.asarray(prob.u0_paramjac(pv), dtype=float)
        grad += lam @ s0
    warn = (EVENT_WARNING,) if prob.events else ()
    return GradientResult(
        grad=grad,
        cost=cost_value,
        n_solves=n_solves,
        warnings=warn,
        nf=counters["nf"],
        njac=counters["njac"],
    )


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def numdiff(prob, cfg, out_times, scheme="central"):
    """Trajectory sensitivities by differencing repeated solves.

    ``forward`` uses one base solve plus one perturbed solve per parameter;
    ``central`` uses exactly two perturbed solves per parameter and no base
    solve.  Step sizes follow the usual rounding/truncation balance:
    ``sqrt(eps) * max(|p_j|, 1)`` for forward, ``cbrt(eps) * max(|p_j|, 1)``
    for central.  A parameter whose perturbed solve fails yields a NaN
    column and an entry in ``invalid_params``.
    """

    if scheme not in ("forward", "central"):
        raise ValueError("scheme must be 'forward' or 'central'")
    out_times = _check_out_times(prob, out_times)
    pv = values(np.asarray(prob.p))
    u0v = values(np.asarray(prob.u0))
    n, n_param = u0v.shape[0], pv.shape[0]
    n_times = out_times.shape[0]
    cfg_fast = replace(cfg, dense=False)

    counters = {"nf": 0, "njac": 0}

    def solve_at(p_try, context):
        sub = replace(prob, u0=u0v.copy(), p=p_try)
        sol = solve(sub, cfg_fast, saveat=out_times)
        counters["nf"] += sol.stats.nf
        counters["njac"] += sol.stats.njac
        _require_success(sol, context)
        states = _saved_states(sol, n_times)
        return np.array([values(u) for u in states]), sol

    n_solves = 0
    sens = np.zeros((n_times, n, n_param))
    invalid = []
    if scheme == "forward":
        base_states, base = solve_at(pv, "base solve")
        n_solves += 1
        vals = base_states
        h_scale = np.sqrt(_EPS)
    else:
        base_states, base = None, None
        vals = None
        h_scale = _EPS ** (1.0 / 3.0)

    for j in range(n_param):
        h = h_scale * max(abs(pv[j]), 1.0)
        p_hi = pv.copy()
        p_hi[j] += h
        try:
            hi_states, _ = solve_at(p_hi, f"perturbed solve (+) for p[{j}]")
            n_solves += 1
            if scheme == "forward":
                col = (hi_states - base_states) / h
            else:
                p_lo = pv.copy()
                p_lo[j] -= h
                lo_states, _ = solve_at(
                    p_lo, f"perturbed solve (-) for p[{j}]"
                )
                n_solves += 1
                col = (hi_states - lo_states) / (2.0 * h)
                if vals is None:
                    vals = 0.5 * (hi_states + lo_states)
        except SolveFailedError:
            invalid.append(j)
            sens[:, :, j] = np.nan
            continue
        sens[:, :, j] = col

    if vals is None:
        # every column failed; fall back to an unperturbed solve for values
        vals, base = solve_at(pv, "base solve")
        n_solves += 1
    return SensitivityResult(
        times=out_times,
        sens=sens,
        base=base,
        values=vals,
        n_solves=n_solves,
        invalid_params=tuple(invalid),
        nf=counters["nf"],
        njac=counters["njac"],
    )


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def compute_sensitivities(prob, cfg, out_times, method):
    """Run a trajectory-sensitivity method selected by name or value.

    Adjoint methods produce loss gradients rather than trajectory
    derivatives; asking for one here is a usage error.
    """

    if isinstance(method, str):
        method = SensitivityMethod.parse(method)
    if method.kind == "dsaad":
        return dsaad_forward(prob, cfg, out_times, chunk=method.chunk)
    if method.kind == "csa":
        return csa_forward(prob, cfg, out_times, jac_strategy=method.jac)
    if method.kind == "numdiff":
        return numdiff(prob, cfg, out_times, scheme=method.scheme)
    raise ValueError(
        f"method {method.cli_name!r} computes loss gradients, not "
        "trajectory sensitivities; use loss_gradient instead"
    )


def loss_gradient(prob, cfg, cost, method):
    """Gradient of ``sum_k c(u(t_k), k)`` with respect to the parameters.

    Forward methods assemble the chain rule
    ``dC/dp = sum_k (dc/du)(t_k) @ S(t_k)`` from trajectory sensitivities on
    the data grid; the adjoint method computes the same gradient without ever
    forming ``S``.
    """

    if isinstance(method, str):
        method = SensitivityMethod.parse(method)
    if method.kind == "casa":
        return casa_adjoint(prob, cfg, cost, vjp_strategy=method.vjp)
    res = compute_sensitivities(prob, cfg, cost.times, method)
    grad = np.zeros(res.sens.shape[2])
    total = 0.0
    for k in range(cost.times.size):
        u_k = res.values[k]
        total += cost.point_cost(u_k, k)
        grad += cost.point_grad(u_k, k) @ res.sens[k]
    return GradientResult(
        grad=grad,
        cost=float(total),
        n_solves=res.n_solves,
        warnings=res.warnings,
        nf=res.nf,
        njac=res.njac,
    )
