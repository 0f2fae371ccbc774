"""Sensitivity analysis for ODE solutions.

Four routes to solution derivatives with respect to parameters:

- forward-mode differentiation of the solver itself on dual numbers
  (events included),
- the continuous forward sensitivity system,
- the continuous adjoint with quadrature-based gradient accumulation,
- plain finite differences,

on top of generic adaptive explicit and Rosenbrock integrators with dense
output and event handling, plus benchmark models, parameter estimation,
and a benchmarking command-line tool.
"""

from .dual import (
    Dual,
    DualWidthError,
    SeedPlan,
    dual_array,
    jacobian,
    jvp,
    partials,
    partials_matrix,
    plan_chunks,
    seed_array,
    value,
    values,
    width_of,
)
from .ode import (
    EventSpec,
    IntegratorConfig,
    ODEProblem,
    RetCode,
    Solution,
    Stats,
    TimeEvent,
    interpolate,
    locate_event,
    solve,
    solve_explicit,
    solve_stiff,
)
from .quad import QuadratureError, QuadResult, adaptive, gk15
from .tape import (
    Tape,
    TapeBranchError,
    VJPResult,
    VJPStrategy,
    record,
    reuse_tape,
    vjp,
)
from .models import (
    EstimationDefaults,
    ModelSpec,
    bruss,
    get_model,
    hybrid_control,
    lv,
    model_names,
    pkpd,
    pollu,
)
from .sensitivity import (
    EVENT_WARNING,
    CostSpec,
    GradientResult,
    JacStrategy,
    SensitivityMethod,
    SensitivityResult,
    SolveFailedError,
    all_methods,
    casa_adjoint,
    compute_sensitivities,
    csa_forward,
    dsaad_forward,
    loss_gradient,
    numdiff,
)
from .estimation import (
    Dataset,
    OptResult,
    bfgs,
    estimate,
    generate_data,
    l2_loss,
)
from .report import BenchRecord

__version__ = "0.1.0"

__all__ = [
    "Dual",
    "DualWidthError",
    "SeedPlan",
    "dual_array",
    "jacobian",
    "jvp",
    "partials",
    "partials_matrix",
    "plan_chunks",
    "seed_array",
    "value",
    "values",
    "width_of",
    "EventSpec",
    "IntegratorConfig",
    "ODEProblem",
    "RetCode",
    "Solution",
    "Stats",
    "TimeEvent",
    "interpolate",
    "locate_event",
    "solve",
    "solve_explicit",
    "solve_stiff",
    "QuadratureError",
    "QuadResult",
    "adaptive",
    "gk15",
    "Tape",
    "TapeBranchError",
    "VJPResult",
    "VJPStrategy",
    "record",
    "reuse_tape",
    "vjp",
    "EstimationDefaults",
    "ModelSpec",
    "bruss",
    "get_model",
    "hybrid_control",
    "lv",
    "model_names",
    "pkpd",
    "pollu",
    "EVENT_WARNING",
    "CostSpec",
    "GradientResult",
    "JacStrategy",
    "SensitivityMethod",
    "SensitivityResult",
    "SolveFailedError",
    "all_methods",
    "casa_adjoint",
    "compute_sensitivities",
    "csa_forward",
    "dsaad_forward",
    "loss_gradient",
    "numdiff",
    "Dataset",
    "OptResult",
    "bfgs",
    "estimate",
    "generate_data",
    "l2_loss",
    "BenchRecord",
    "__version__",
]
