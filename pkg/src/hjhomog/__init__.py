"""Numerical toolkit for weakly coupled Hamilton-Jacobi systems with
oscillatory Hamiltonians: monotone finite-difference and dynamic-programming
solvers, effective Hamiltonians through the cell problem, the decoupling
fixed-point iteration, and rate-measurement experiments.

Imports are resolved lazily so that ``import hjhomog`` stays free of the
numeric stack: the command-line frontend must be able to pin BLAS/OpenMP
thread counts through environment variables before numpy first loads.
"""

from .errors import (  # noqa: F401  (numpy-free, safe to import eagerly)
    AcceptanceFailure,
    AgreementError,
    CoercivityError,
    NumericalError,
    OutOfBoxError,
    PreconditionError,
)

_EXPORTS = {
    # model
    "HamiltonianSpec": "model",
    "InitialData": "model",
    "LagrangianEvaluator": "model",
    "SamplePlan": "model",
    "HypothesisReport": "model",
    "check_hypotheses": "model",
    "kruzhkov_transform": "model",
    "legendre_transform": "model",
    "sample_sup_h_at_rest": "model",
    "estimate_solution_bound": "model",
    # grid
    "TorusGrid": "grid",
    "Field": "grid",
    "restrict_to_coarser": "grid",
    "sup_distance": "grid",
    # finite differences
    "SchemeConfig": "fd_solver",
    "StationaryConfig": "fd_solver",
    "solve_cauchy": "fd_solver",
    "solve_cauchy_monotonized": "fd_solver",
    "solve_stationary": "fd_solver",
    "scheme_error_estimate": "fd_solver",
    # cell problem
    "CellConfig": "cell",
    "EffectiveCache": "cell",
    "effective_hamiltonian": "cell",
    "build_cache": "cell",
    # dynamic programming
    "DPConfig": "oracle_dp",
    "ActionResult": "oracle_dp",
    "value_function": "oracle_dp",
    "point_action": "oracle_dp",
    "discounted_value": "oracle_dp",
    # iteration
    "IterationConfig": "iterate",
    "IterationTrace": "iterate",
    "iterate_cauchy": "iterate",
    "iterate_stationary": "iterate",
    "fixed_point_residual": "iterate",
    # problems
    "Problem": "problems",
    "get_problem": "problems",
    "load_problem_config": "problems",
    "validate_problem": "problems",
    "shift_invariant_counterexample": "problems",
    "tent_potential": "problems",
    "bump_potential": "problems",
    # experiments
    "RateReport": "harness",
    "SharpnessReport": "harness",
    "ActionGapReport": "harness",
    "run_rate_experiment": "harness",
    "run_example11": "harness",
    "run_action_gap": "harness",
    "run_stationary_rate": "harness",
    "fit_rate": "harness",
    "kendall_growth": "harness",
}

__all__ = sorted(_EXPORTS) + [
    "AcceptanceFailure", "AgreementError", "CoercivityError",
    "NumericalError", "OutOfBoxError", "PreconditionError",
]

__version__ = "0.1.0"


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        value = getattr(module, name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(__all__))
