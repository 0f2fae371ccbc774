"""Benchmark harness: ``odesens sens | scale | estimate | verify``.

Each command runs a measurement and leaves machine-readable output at
``--out`` (CSV rows with a pinned header, or a single JSON document), with
a rendered figure of the same data alongside.  Exit codes: 0 success,
1 runtime or assertion failure, 2 usage error.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .dual import jacobian, jvp, values
from .estimation import estimate, generate_data
from .models import get_model, model_names
from .ode import IntegratorConfig, ODEProblem
from .quad import QuadratureError
from .report import (
    BenchRecord,
    render_scaling_figure,
    render_traces_figure,
    render_traj_figure,
    traj_as_dict,
    write_json,
    write_records_csv,
    write_traj_csv,
)
from .sensitivity import (
    EVENT_WARNING,
    CostSpec,
    SensitivityMethod,
    SolveFailedError,
    casa_adjoint,
    compute_sensitivities,
    loss_gradient,
)
from .tape import record as tape_record
from .tape import vjp as tape_vjp

_RUN_ERRORS = (SolveFailedError, QuadratureError, ArithmeticError)


def _load_model(name, **kwargs):
    try:
        return get_model(name, **kwargs)
    except KeyError:
        raise click.UsageError(
            f"unknown model {name!r}; available: {', '.join(model_names())}"
        ) from None


def _parse_method(name):
    try:
        return SensitivityMethod.parse(name)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _run_cfg(model, tol):
    """Integrator settings for a benchmark run at relative tolerance `tol`."""
    return IntegratorConfig(
        reltol=float(tol),
        abstol=float(tol) * 1e-2,
        stiff=model.recommended_solver == "stiff",
    )


def _timed(fn, repeat):
    """Median wall time of ``repeat`` runs (one warmup first when > 1)."""
    repeat = max(1, int(repeat))
    if repeat > 1:
        fn()  # warmup: first-call costs (tape recording, caches) excluded
    samples = []
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), result


def _sidecar(out_path, suffix):
    out = Path(out_path)
    return out.with_name(out.stem + suffix)


def _data_grid(model):
    prob = model.problem
    n = model.estimation_defaults.n_data_points
    return np.linspace(float(prob.t0), float(prob.tf), n)


def _echo_record(rec):
    wall = "-" if rec.wall_time_s is None else f"{rec.wall_time_s:.4g}s"
    err = "-" if rec.max_err is None else f"{rec.max_err:.3g}"
    click.echo(
        f"{rec.model:8s} {rec.method:16s} P={rec.n_params:<4d} "
        f"time={wall:>10s} nf={rec.nf:<8d} nJ={rec.njac:<6d} "
        f"max_err={err:>9s} {rec.retcode}"
    )


@click.group()
@click.version_option(package_name="odesens", prog_name="odesens")
def main():
    """Benchmarks and cross-checks for ODE sensitivity methods."""


# ---------------------------------------------------------------------------
# sens
# ---------------------------------------------------------------------------


@main.command()
@click.option("--model", "model_name", required=True,
              help="Model name (" + ", ".join(model_names()) + ").")
@click.option("--method", "method_name", default="dsaad", show_default=True,
              help="Sensitivity method (see package docs for the list).")
@click.option("--tol", default=1e-6, show_default=True,
              help="Relative solver tolerance (absolute = tol/100).")
@click.option("--out", "out_path", default="sens.csv", show_default=True,
              help="Output path for the benchmark record.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Unused here; accepted for a uniform flag set.")
@click.option("--repeat", default=5, show_default=True,
              help="Timing repetitions (median; one warmup when > 1).")
def sens(model_name, method_name, tol, out_path, fmt, seed, repeat):
    """Time one sensitivity computation and compare it against dsaad.

    Writes a benchmark record plus the full sensitivity trajectories
    (long-form CSV ``<out>_traj.csv`` and figure ``<out>_traj.png``, or
    everything inline with ``--format json``).
    """

    model = _load_model(model_name)
    method = _parse_method(method_name)
    if method.kind == "casa":
        raise click.UsageError(
            f"{method.cli_name} computes loss gradients, not trajectory "
            "sensitivities; use `odesens estimate` to exercise it"
        )
    cfg = _run_cfg(model, tol)
    out_times = _data_grid(model)
    prob = model.problem

    try:
        wall, res = _timed(
            lambda: compute_sensitivities(prob, cfg, out_times, method),
            repeat,
        )
    except _RUN_ERRORS as exc:
        rec = BenchRecord(model_name, method.cli_name, model.n_params,
                          None, 0, 0, None, _retcode_of(exc))
        _write_sens_output(out_path, fmt, rec, None, model_name, method)
        raise click.ClickException(f"sensitivity run failed: {exc}")

    max_err = None
    if method.cli_name != "dsaad":
        ref = compute_sensitivities(
            prob, cfg, out_times, SensitivityMethod.dsaad()
        )
        max_err = float(np.nanmax(np.abs(res.sens - ref.sens)))
    rec = BenchRecord(model_name, method.cli_name, model.n_params,
                      wall, res.nf, res.njac, max_err, "success")
    _write_sens_output(out_path, fmt, rec, res, model_name, method)
    _echo_record(rec)
    for w in res.warnings:
        click.echo(f"warning: {w}", err=True)


def _retcode_of(exc):
    return exc.retcode.value if isinstance(exc, SolveFailedError) else "error"


def _write_sens_output(out_path, fmt, rec, res, model_name, method):
    if fmt == "json":
        payload = {"records": [rec.as_dict()]}
        if res is not None:
            payload["trajectories"] = traj_as_dict(res.times, res.sens)
        write_json(out_path, payload)
    else:
        write_records_csv(out_path, [rec])
        if res is not None:
            write_traj_csv(_sidecar(out_path, "_traj.csv"),
                           res.times, res.sens)
    if res is not None:
        render_traj_figure(
            _sidecar(out_path, "_traj.png"), res.times, res.sens,
            f"{model_name}: du/dp by {method.cli_name}",
        )


# ---------------------------------------------------------------------------
# scale
# ---------------------------------------------------------------------------


@main.command()
@click.option("--n-list", default="3,4,5", show_default=True,
              help="Comma-separated Brusselator grid sizes (each >= 2).")
@click.option("--methods", default="dsaad,casa-user", show_default=True,
              help="Comma-separated methods to time.")
@click.option("--tol", default=1e-6, show_default=True,
              help="Relative solver tolerance (absolute = tol/100).")
@click.option("--out", "out_path", default="scale.csv", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Unused here; accepted for a uniform flag set.")
@click.option("--repeat", default=5, show_default=True,
              help="Timing repetitions (median; one warmup when > 1).")
def scale(n_list, methods, tol, out_path, fmt, seed, repeat):
    """Brusselator gradient-cost scaling study over grid sizes N.

    For each N the loss gradient of an L2 fit (data from the true
    parameters, gradient taken at the standard initial guess) is timed per
    method; rows carry n_params = 4N^2 and the deviation from the dsaad
    gradient.  Per-cell failures are recorded and the sweep continues.
    """

    try:
        sizes = sorted({int(s) for s in n_list.split(",") if s.strip()})
    except ValueError:
        raise click.UsageError(f"could not parse --n-list {n_list!r}")
    if not sizes:
        raise click.UsageError("--n-list is empty")
    if min(sizes) < 2:
        raise click.UsageError("every grid size in --n-list must be >= 2")
    method_objs = [_parse_method(s.strip())
                   for s in methods.split(",") if s.strip()]
    if not method_objs:
        raise click.UsageError("--methods is empty")

    records = []
    for n in sizes:
        model = _load_model("bruss", N=n)
        cfg = _run_cfg(model, tol)
        data = generate_data(model)
        cost = CostSpec.l2(data.times, data.observations)
        p_eval = model.estimation_defaults.initial_guess_rule(
            data.source_params
        )
        prob = model.problem.with_params(np.asarray(p_eval, dtype=float))

        grads = {}
        for method in method_objs:
            try:
                wall, res = _timed(
                    lambda m=method: loss_gradient(prob, cfg, cost, m),
                    repeat,
                )
            except _RUN_ERRORS as exc:
                rec = BenchRecord("bruss", method.cli_name, model.n_params,
                                  None, 0, 0, None, _retcode_of(exc))
                records.append(rec)
                _echo_record(rec)
                continue
            grads[method.cli_name] = res.grad
            rec = BenchRecord("bruss", method.cli_name, model.n_params,
                              wall, res.nf, res.njac, None, "success")
            records.append(rec)

        # fill in deviations from the dsaad gradient at the same point
        ref = grads.get("dsaad")
        if ref is None and grads:
            ref = loss_gradient(
                prob, cfg, cost, SensitivityMethod.dsaad()
            ).grad
        for i, rec in enumerate(records):
            if (rec.n_params == model.n_params and rec.retcode == "success"
                    and rec.method != "dsaad" and ref is not None):
                dev = float(np.max(np.abs(grads[rec.method] - ref)))
                records[i] = replace(rec, max_err=dev)
        for rec in records[-len(method_objs):]:
            if rec.retcode == "success":
                _echo_record(rec)

    if fmt == "json":
        write_json(out_path, {"records": [r.as_dict() for r in records]})
    else:
        write_records_csv(out_path, records)
    render_scaling_figure(
        _sidecar(out_path, "_scaling.png"), records,
        "Brusselator loss-gradient cost vs parameter count",
    )
    if not any(r.retcode == "success" for r in records):
        raise click.ClickException("every scaling cell failed")


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


@main.command("estimate")
@click.option("--model", "model_name", required=True,
              help="Model name (" + ", ".join(model_names()) + ").")
@click.option("--method", "method_name", default="dsaad", show_default=True,
              help="Gradient method for the fit.")
@click.option("--tol", default=None, type=float,
              help="Relative solver tolerance inside the fit "
                   "(default: the estimator's own).")
@click.option("--gtol", default=1e-6, show_default=True,
              help="Gradient infinity-norm stopping tolerance.")
@click.option("--max-iters", default=200, show_default=True)
@click.option("--out", "out_path", default="estimate.csv", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Unused here; accepted for a uniform flag set.")
def estimate_cmd(model_name, method_name, tol, gtol, max_iters, out_path,
                 fmt, seed):
    """Fit a model's parameters to noise-free synthetic data by BFGS.

    Data come from the true parameters on the model's standard grid; the
    start point follows the model's initial-guess rule.  Writes a benchmark
    record plus the optimizer outcome (``<out>_opt.json`` sidecar, or
    everything inline with ``--format json``).  Exits 1 if the fit does not
    converge (the partial record is still written).
    """

    model = _load_model(model_name)
    method = _parse_method(method_name)
    cfg = None if tol is None else _run_cfg(model, tol)
    try:
        data = generate_data(model)
    except _RUN_ERRORS as exc:
        raise click.ClickException(f"data generation failed: {exc}")

    p_true = np.asarray(data.source_params, dtype=float)
    p_init = np.asarray(
        model.estimation_defaults.initial_guess_rule(p_true), dtype=float
    )
    t0 = time.perf_counter()
    try:
        opt = estimate(model, method, data, cfg=cfg, gtol=gtol,
                       max_iters=max_iters)
    except _RUN_ERRORS as exc:
        rec = BenchRecord(model_name, method.cli_name, model.n_params,
                          None, 0, 0, None, _retcode_of(exc))
        _write_estimate_output(out_path, fmt, rec, None)
        raise click.ClickException(f"estimation failed: {exc}")
    wall = time.perf_counter() - t0

    max_err = float(np.max(
        np.abs(opt.p_final - p_true) / np.maximum(1.0, np.abs(p_true))
    ))
    rec = BenchRecord(
        model_name, method.cli_name, model.n_params, wall,
        opt.nf, opt.njac, max_err,
        "success" if opt.converged else "failed",
    )
    detail = {
        "model": model_name,
        "method": method.cli_name,
        "converged": bool(opt.converged),
        "iterations": int(opt.iterations),
        "cost_final": float(opt.cost_final),
        "grad_norm": float(opt.grad_norm),
        "n_cost_evals": int(opt.n_cost_evals),
        "n_grad_evals": int(opt.n_grad_evals),
        "nf": int(opt.nf),
        "nJ": int(opt.njac),
        "wall_time_s": float(wall),
        "gtol": float(gtol),
        "max_iters": int(max_iters),
        "p_true": p_true.tolist(),
        "p_initial": p_init.tolist(),
        "p_final": np.asarray(opt.p_final, dtype=float).tolist(),
        "max_rel_err": max_err,
    }
    _write_estimate_output(out_path, fmt, rec, detail)
    _echo_record(rec)
    click.echo(
        f"converged={opt.converged} iterations={opt.iterations} "
        f"grad_norm={opt.grad_norm:.3g} max_rel_err={max_err:.3g}"
    )
    if not opt.converged:
        raise click.ClickException(
            f"estimation did not converge within {max_iters} iterations "
            f"(gradient norm {opt.grad_norm:.3g} > {gtol:g})"
        )


def _write_estimate_output(out_path, fmt, rec, detail):
    if fmt == "json":
        payload = {"records": [rec.as_dict()]}
        if detail is not None:
            payload["optimization"] = detail
        write_json(out_path, payload)
    else:
        write_records_csv(out_path, [rec])
        if detail is not None:
            write_json(_sidecar(out_path, "_opt.json"), detail)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


class _CheckSuite:
    def __init__(self):
        self.checks = []

    def add(self, name, measured, tolerance, detail=""):
        measured = float(measured)
        passed = bool(np.isfinite(measured) and measured <= tolerance)
        self.checks.append({
            "name": name,
            "passed": passed,
            "measured": measured,
            "tolerance": float(tolerance),
            "detail": detail,
        })
        status = "PASS" if passed else "FAIL"
        click.echo(f"{status} {name:34s} measured={measured:.3e} "
                   f"tol={tolerance:.0e}")

    def add_flag(self, name, passed, detail=""):
        self.checks.append({
            "name": name,
            "passed": bool(passed),
            "measured": 1.0 if passed else 0.0,
            "tolerance": 1.0,
            "detail": detail,
        })
        click.echo(f"{'PASS' if passed else 'FAIL'} {name:34s} {detail}")

    @property
    def failed(self):
        return [c["name"] for c in self.checks if not c["passed"]]


def _rel_dev(g, ref):
    ref = np.asarray(ref, dtype=float)
    scale = max(1e-300, float(np.max(np.abs(ref))))
    return float(np.max(np.abs(np.asarray(g, dtype=float) - ref)) / scale)


def _sample_point(model, rng):
    """A physically plausible random evaluation point for an RHS."""
    prob = model.problem
    u0 = np.abs(values(np.asarray(prob.u0))) + 0.1
    u = u0 * (1.0 + 0.3 * rng.random(u0.shape[0]))
    p = values(np.asarray(prob.p)) * (1.0 + 0.1 * rng.random(model.n_params))
    t = 0.5 * (float(prob.t0) + float(prob.tf))
    return u, p, t


@main.command()
@click.option("--out", "out_path", default="verify.json", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Seed for the randomized derivative spot checks.")
@click.option("--inject-fault", is_flag=True,
              help="Deliberately perturb the Lotka-Volterra analytic "
                   "Jacobian to demonstrate that the agreement checks "
                   "catch a wrong derivative.")
def verify(out_path, seed, inject_fault):
    """Cross-method agreement and derivative-correctness suite.

    Runs event-sensitivity oracles on the hybrid control problem,
    trajectory-sensitivity agreement on Lotka-Volterra and the Brusselator,
    loss-gradient agreement, an analytic adjoint oracle, and randomized
    AD-versus-finite-difference spot checks on every model right-hand side.
    Emits a JSON report and a sensitivity-trace figure; exits 0 only if
    every check passes.
    """

    suite = _CheckSuite()
    rng = np.random.default_rng(seed)

    # hybrid control: the event time and jump depend on the parameters
    hyb = _load_model("hybrid")
    cfg_h = _run_cfg(hyb, 1e-8)
    times_h = np.linspace(0.0, 1.0, 51)
    res_d = compute_sensitivities(hyb.problem, cfg_h, times_h, "dsaad")
    expect = np.array([[-1.0, 0.0], [-0.25, 0.5]])
    suite.add("hybrid-dsaad-event-sens",
              np.max(np.abs(res_d.sens[-1] - expect)), 1e-6,
              "solver-differentiated du/dp at t=1 vs closed form")
    res_c = compute_sensitivities(hyb.problem, cfg_h, times_h, "csa-user")
    naive = np.array([[-1.0, 0.0], [0.0, 1.0]])
    suite.add("hybrid-csa-naive-passthrough",
              np.max(np.abs(res_c.sens[-1] - naive)), 1e-6,
              "forward sensitivity equations carried through the jump "
              "reproduce the documented wrong values")
    suite.add_flag("hybrid-csa-event-warning",
                   EVENT_WARNING in res_c.warnings,
                   "the pass-through result is flagged")

    # Lotka-Volterra trajectory agreement (optionally with a faulty Jacobian)
    lv = _load_model("lv")
    lv_prob = lv.problem
    if inject_fault:
        true_jac = lv_prob.jac

        def faulty_jac(u, p, t):
            return np.asarray(true_jac(u, p, t)) * (1.0 + 1e-3)

        lv_prob = replace(lv_prob, jac=faulty_jac)
        click.echo("fault injection: lv analytic Jacobian scaled by 1+1e-3",
                   err=True)
    cfg_lv = _run_cfg(lv, 1e-6)
    times_lv = _data_grid(lv)
    ref_lv = compute_sensitivities(lv_prob, cfg_lv, times_lv, "dsaad")
    for name in ("csa-user", "csa-ad-jac", "csa-ad-jv"):
        got = compute_sensitivities(lv_prob, cfg_lv, times_lv, name)
        suite.add(f"lv-dsaad-vs-{name}",
                  np.max(np.abs(got.sens - ref_lv.sens)), 5e-4,
                  "max-norm trajectory-sensitivity deviation")

    # Brusselator(3) agreement + traces at grid point (1,1)
    br = _load_model("bruss", N=3)
    cfg_br = _run_cfg(br, 1e-6)
    times_br = _data_grid(br)
    br_d = compute_sensitivities(br.problem, cfg_br, times_br, "dsaad")
    br_c = compute_sensitivities(br.problem, cfg_br, times_br, "csa-user")
    suite.add("bruss3-dsaad-vs-csa-user",
              np.max(np.abs(br_c.sens - br_d.sens)), 5e-4,
              "max-norm trajectory-sensitivity deviation")
    iu, iv = 1 * 3 + 1, 9 + 1 * 3 + 1  # u and v at grid point (1,1), N=3
    traces = {
        "model": "bruss",
        "N": 3,
        "grid_point": [1, 1],
        "param_index": 0,
        "times": [float(t) for t in times_br],
        "methods": {
            "dsaad": {
                "u": br_d.sens[:, iu, 0].tolist(),
                "v": br_d.sens[:, iv, 0].tolist(),
            },
            "csa-user": {
                "u": br_c.sens[:, iu, 0].tolist(),
                "v": br_c.sens[:, iv, 0].tolist(),
            },
        },
    }

    # loss-gradient agreement on Lotka-Volterra at the fitting start point
    data_lv = generate_data(lv)
    cost_lv = CostSpec.l2(data_lv.times, data_lv.observations)
    p_start = lv.estimation_defaults.initial_guess_rule(data_lv.source_params)
    prob_g = lv.problem.with_params(np.asarray(p_start, dtype=float))
    cfg_g = _run_cfg(lv, 1e-8)
    g_ref = loss_gradient(prob_g, cfg_g, cost_lv, "dsaad").grad
    for name in ("casa-user", "casa-ad-vjp", "numdiff-central"):
        g = loss_gradient(prob_g, cfg_g, cost_lv, name).grad
        suite.add(f"lv-grad-dsaad-vs-{name}", _rel_dev(g, g_ref), 1e-3,
                  "relative infinity-norm gradient deviation")

    # analytic adjoint oracle: u' = -p u, c = u(1), dc/dp = -exp(-1)
    decay = ODEProblem(
        rhs=lambda u, p, t: np.array([-p[0] * u[0]]),
        u0=np.array([1.0]),
        p=np.array([1.0]),
        t0=0.0,
        tf=1.0,
    )
    cost_decay = CostSpec(
        times=np.array([1.0]),
        point_cost=lambda u, k: float(u[0]),
        point_grad=lambda u, k: np.array([1.0]),
    )
    g_dec = casa_adjoint(decay, IntegratorConfig(reltol=1e-10, abstol=1e-12),
                         cost_decay)
    suite.add("decay-adjoint-oracle",
              abs(g_dec.grad[0] + np.exp(-1.0)), 1e-6,
              "adjoint gradient of terminal observation vs closed form")

    # randomized derivative spot checks on every model right-hand side
    for name in model_names():
        model = _load_model(name)
        rhs = model.problem.rhs
        u, p, t = _sample_point(model, rng)
        v = rng.standard_normal(u.shape[0])
        v /= np.linalg.norm(v)
        h = np.sqrt(np.finfo(float).eps) * (1.0 + float(np.max(np.abs(u))))
        fd = (np.asarray(rhs(u + h * v, p, t), dtype=float)
              - np.asarray(rhs(u - h * v, p, t), dtype=float)) / (2.0 * h)
        suite.add(f"rhs-dual-vs-fd-{name}",
                  _rel_dev(jvp(rhs, u, p, t, v), fd), 1e-6,
                  "dual directional derivative vs central difference")

    for name in model_names():
        model = _load_model(name)
        rhs = model.problem.rhs
        u, p, t = _sample_point(model, rng)
        J_f = jacobian(rhs, u, p, t, wrt="state")
        P_f = jacobian(rhs, u, p, t, wrt="params")
        tape = tape_record(rhs, u, p, t)
        n = u.shape[0]
        J_r = np.empty_like(J_f)
        P_r = np.empty_like(P_f)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            pull = tape_vjp(tape, e)
            J_r[i] = pull.wrt_state
            P_r[i] = pull.wrt_params
        dev = max(_rel_dev(J_r, J_f), _rel_dev(P_r, P_f))
        suite.add(f"rhs-jacobian-vs-vjp-{name}", dev, 1e-12,
                  "forward-mode Jacobian vs reverse-mode rows")

    n_failed = len(suite.failed)
    report = {
        "n_passed": len(suite.checks) - n_failed,
        "n_failed": n_failed,
        "seed": int(seed),
        "fault_injected": bool(inject_fault),
        "checks": suite.checks,
        "traces": traces,
    }
    write_json(out_path, report)
    render_traces_figure(
        _sidecar(out_path, "_traces.png"), traces,
        "Brusselator(3) sensitivities at grid point (1,1)",
    )
    click.echo(f"{report['n_passed']}/{len(suite.checks)} checks passed")
    if n_failed:
        raise click.ClickException(
            "failed checks: " + ", ".join(suite.failed)
        )


if __name__ == "__main__":
    main()
