"""Benchmark problems packaged with defaults for solving and estimation.

Each constructor returns an immutable :class:`ModelSpec` bundling the
right-hand side (written against generic scalars, so dual and traced
numbers flow through unchanged), an analytic state Jacobian, the reference
parameter values, and the defaults used by the benchmark and estimation
drivers.  Models are addressable by name through :func:`get_model`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from ..ode import ODEProblem


class EstimationDefaults(NamedTuple):
    """Data-generation and starting-point defaults for parameter fitting."""

    n_data_points: int
    initial_guess_rule: Callable


@dataclass(frozen=True)
class ModelSpec:
    """A benchmark problem with everything needed to run it.

    ``recommended_solver`` is ``"explicit"`` or ``"stiff"``.
    ``analytic_jacobian`` is the state Jacobian df/du (also installed on
    ``problem.jac`` so stiff solves pick it up automatically).  Models with
    a closed-form solution attach it as ``analytic_solution`` /
    ``analytic_sensitivity``.
    """

    name: str
    problem: ODEProblem
    analytic_jacobian: Optional[Callable]
    true_params: np.ndarray
    default_tspan: tuple
    recommended_solver: str
    estimation_defaults: EstimationDefaults
    analytic_solution: Optional[Callable] = None
    analytic_sensitivity: Optional[Callable] = None

    @property
    def n_states(self):
        return self.problem.u0.shape[0]

    @property
    def n_params(self):
        return np.asarray(self.true_params).shape[0]


from .lv import lv  # noqa: E402
from .bruss import bruss, forcing as bruss_forcing  # noqa: E402
from .pollu import pollu  # noqa: E402
from .pkpd import pkpd  # noqa: E402
from .hybrid import hybrid_control  # noqa: E402

_REGISTRY = {
    "lv": lv,
    "bruss": bruss,
    "pollu": pollu,
    "pkpd": pkpd,
    "hybrid": hybrid_control,
}


def model_names():
    return tuple(_REGISTRY)


def get_model(name, **kwargs):
    """Build a model by registry name; kwargs go to its constructor."""
    try:
        ctor = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; available: {', '.join(_REGISTRY)}"
        ) from None
    return ctor(**kwargs)


__all__ = [
    "ModelSpec",
    "EstimationDefaults",
    "get_model",
    "model_names",
    "lv",
    "bruss",
    "bruss_forcing",
    "pollu",
    "pkpd",
    "hybrid_control",
]
