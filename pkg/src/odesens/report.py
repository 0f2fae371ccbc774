"""Machine-readable benchmark output: records, delimited files, figures.

Every benchmark command emits rows of one shape, :class:`BenchRecord`, as
CSV (pinned header, shortest round-trip floats, empty cell for missing
values) or JSON.  Sensitivity runs add a trajectory table, and each
delimited artifact is paired with a rendered figure of the same data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

CSV_HEADER = ("model", "method", "n_params", "wall_time_s", "nf", "nJ",
              "max_err", "retcode")

TRAJ_HEADER = ("time", "state", "param", "dudp")


@dataclass(frozen=True)
class BenchRecord:
    """One benchmark cell: what ran, how long it took, how close it was.

    ``max_err`` is filled only when the run was compared against a
    designated reference method; ``wall_time_s`` only when the run
    succeeded.  Missing values serialize as empty CSV cells / JSON null.
    """

    model: str
    method: str
    n_params: int
    wall_time_s: Optional[float]
    nf: int
    njac: int
    max_err: Optional[float]
    retcode: str

    def row(self):
        return (
            self.model,
            self.method,
            str(int(self.n_params)),
            _cell(self.wall_time_s),
            str(int(self.nf)),
            str(int(self.njac)),
            _cell(self.max_err),
            self.retcode,
        )

    def as_dict(self):
        return {
            "model": self.model,
            "method": self.method,
            "n_params": int(self.n_params),
            "wall_time_s": _opt_float(self.wall_time_s),
            "nf": int(self.nf),
            "nJ": int(self.njac),
            "max_err": _opt_float(self.max_err),
            "retcode": self.retcode,
        }


def _cell(x):
    """Shortest round-trip decimal, or an empty cell for a missing value."""
    return "" if x is None else repr(float(x))


def _opt_float(x):
    return None if x is None else float(x)


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.row())


def read_records_csv(path):
    """Rows of a records CSV as dicts (strings as written)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_traj_csv(path, times, sens):
    """Long-form trajectory table: one row per (time, state, param)."""
    times = np.asarray(times, dtype=float)
    sens = np.asarray(sens, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for k, t in enumerate(times):
            for i in range(sens.shape[1]):
                for j in range(sens.shape[2]):
                    w.writerow(
                        (repr(float(t)), str(i), str(j),
                         repr(float(sens[k, i, j])))
                    )


def traj_as_dict(times, sens):
    return {
        "times": [float(t) for t in np.asarray(times, dtype=float)],
        "dudp": np.asarray(sens, dtype=float).tolist(),
    }


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_traj_figure(path, times, sens, title, max_curves=12):
    """Sensitivity trajectories du_i/dp_j over time.

    Every curve is drawn when there are few; otherwise the ``max_curves``
    largest by peak magnitude, so wide models stay readable.
    """

    plt = _pyplot()
    times = np.asarray(times, dtype=float)
    sens = np.asarray(sens, dtype=float)
    n, n_param = sens.shape[1], sens.shape[2]
    pairs = [(i, j) for i in range(n) for j in range(n_param)]
    if len(pairs) > max_curves:
        peak = {(i, j): float(np.nanmax(np.abs(sens[:, i, j])))
                for (i, j) in pairs}
        pairs = sorted(pairs, key=lambda ij: -peak[ij])[:max_curves]
        pairs.sort()
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for i, j in pairs:
        ax.plot(times, sens[:, i, j], label=f"du{i}/dp{j}", lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("du/dp")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fit_slope(x, y):
    """Least-squares slope of log y against log x."""
    mask = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)[0])


def render_scaling_figure(path, records, title):
    """Log-log wall time against parameter count, one line per method."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    methods = []
    for rec in records:
        if rec.method not in methods:
            methods.append(rec.method)
    for meth in methods:
        pts = sorted(
            (rec.n_params, rec.wall_time_s)
            for rec in records
            if rec.method == meth and rec.wall_time_s is not None
        )
        if not pts:
            continue
        x = np.array([p for p, _ in pts], dtype=float)
        y = np.array([t for _, t in pts], dtype=float)
        slope = _fit_slope(x, y)
        ax.loglog(x, y, "o-", label=f"{meth} (slope {slope:.2f})")
    ax.set_xlabel("number of parameters")
    ax.set_ylabel("gradient wall time [s]")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_traces_figure(path, traces, title):
    """Overlay of per-method state-sensitivity traces at one grid point."""
    plt = _pyplot()
    times = np.asarray(traces["times"], dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8), sharex=True)
    styles = ("-", "--", ":", "-.")
    for ax, comp in zip(axes, ("u", "v")):
        for k, (meth, series) in enumerate(traces["methods"].items()):
            ax.plot(
                times,
                np.asarray(series[comp], dtype=float),
                styles[k % len(styles)],
                label=meth,
                lw=1.4,
            )
        ax.set_xlabel("t")
        ax.set_ylabel(f"d{comp}/dp{traces['param_index']}")
        ax.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
