"""Skorokhod problems with mean reflection and their SDE counterparts."""
from .errors import ConstraintViolation, InvalidArgument, MeanReflectError, NumericalFailure
from .grid_paths import BarrierPair, GridPath, PiecewisePath, TimeGrid
from .mean_map import Ensemble, H_forward, H_inverse, MeanConstraintFunction, make_h
from .mean_sp import (
    MeanSkorokhodProblem,
    MeanSkorokhodSolution,
    PathEnsemble,
    solve_mean_lower,
    solve_mean_two_barrier,
    solve_mean_upper,
)
from .sde import SimulationConfig, convergence_study, euler_mean_reflected, picard_solve
from .skorokhod_det import solve_two_barrier_formula, solve_two_barrier_recursive

__version__ = "0.1.0"

__all__ = [
    "BarrierPair",
    "ConstraintViolation",
    "Ensemble",
    "GridPath",
    "H_forward",
    "H_inverse",
    "InvalidArgument",
    "MeanConstraintFunction",
    "MeanReflectError",
    "MeanSkorokhodProblem",
    "MeanSkorokhodSolution",
    "NumericalFailure",
    "PathEnsemble",
    "PiecewisePath",
    "SimulationConfig",
    "TimeGrid",
    "convergence_study",
    "euler_mean_reflected",
    "make_h",
    "picard_solve",
    "solve_mean_lower",
    "solve_mean_two_barrier",
    "solve_mean_upper",
    "solve_two_barrier_formula",
    "solve_two_barrier_recursive",
]
