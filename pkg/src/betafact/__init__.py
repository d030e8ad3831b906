"""Beta-divergence factor analysis of dynamic voxel-time data."""

from ._kernels import BACKEND
from .divergence import D_beta, DomainError, d_beta, grad_x_d_beta
from .initialization import InitSpec, initialize
from .metrics import align_factors, nmse, psnr, report
from .models import DataMatrix, ModelKind, ModelSpec, Theta, check_constraints, evaluate_model, objective
from .phantom import NoiseSpec, PhantomSpec, generate
from .solvers import FitResult, NumericalError, SolverConfig, Termination, fit

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "D_beta",
    "DataMatrix",
    "DomainError",
    "FitResult",
    "InitSpec",
    "ModelKind",
    "ModelSpec",
    "NoiseSpec",
    "NumericalError",
    "PhantomSpec",
    "SolverConfig",
    "Termination",
    "Theta",
    "align_factors",
    "check_constraints",
    "d_beta",
    "evaluate_model",
    "fit",
    "generate",
    "grad_x_d_beta",
    "initialize",
    "nmse",
    "objective",
    "psnr",
    "report",
]
