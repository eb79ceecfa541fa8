"""Local polynomial quantile regression with bias, Bahadur and rate diagnostics."""

__version__ = "0.1.0"

from .basis import BasisSpec, MultiIndex, enumerate_indices, eval_basis, scaling_matrix
from .errors import ConvergenceError, DomainError, EmptyWindowError, SingularMatrixError
from .estimator import EvalPoint, LocalFit, Sample, derivative, fit_at, fit_grid
from .kernel import KernelSpec, kernel_quadrature, kernel_value
from .qr_solver import SolverOptions, SolverResult, WeightedQRProblem, solve_weighted_qr

__all__ = [
    "BasisSpec", "MultiIndex", "enumerate_indices", "eval_basis", "scaling_matrix",
    "ConvergenceError", "DomainError", "EmptyWindowError", "SingularMatrixError",
    "EvalPoint", "LocalFit", "Sample", "derivative", "fit_at", "fit_grid",
    "KernelSpec", "kernel_quadrature", "kernel_value",
    "SolverOptions", "SolverResult", "WeightedQRProblem", "solve_weighted_qr",
]
