"""Numerical laboratory for the fractional p-Laplacian on intervals and discs.

The library is split into ``domain`` (geometry, grids, analytic fields),
``kernel`` (interaction weights and pointwise principal values), ``energy``
(the discrete energy and its minimiser), ``regularity`` (boundary, Hölder
and Harnack measurements) and ``cli`` (the batch runner).
"""

__version__ = "0.1.0"

from .domain import AnalyticField, DomainSpec, Grid, GridFunction, build_grid, distance_to_complement, sample
from .energy import SolveOptions, SolveReport, discrete_energy, residual, solve, torsion
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    EvaluationError,
    FraclabError,
    GeometryError,
    NumericalError,
    PreconditionError,
    SingularCaseError,
)
from .kernel import (
    EpsilonSchedule,
    KernelWeights,
    OperatorParams,
    assemble_weights,
    eps_limit_series,
    eval_pointwise,
    perturbation_rhs,
    tail,
)

__all__ = [
    "__version__",
    "AnalyticField",
    "DomainSpec",
    "Grid",
    "GridFunction",
    "build_grid",
    "distance_to_complement",
    "sample",
    "SolveOptions",
    "SolveReport",
    "discrete_energy",
    "residual",
    "solve",
    "torsion",
    "EpsilonSchedule",
    "KernelWeights",
    "OperatorParams",
    "assemble_weights",
    "eps_limit_series",
    "eval_pointwise",
    "perturbation_rhs",
    "tail",
    "ConfigurationError",
    "ConvergenceError",
    "DivergenceError",
    "EvaluationError",
    "FraclabError",
    "GeometryError",
    "NumericalError",
    "PreconditionError",
    "SingularCaseError",
]
