"""Numerical laboratory for state-constrained Hamilton-Jacobi equations
lam*u + |Du|^p = f with p > 2, and their vanishing-viscosity approximations.
"""

from .geometry import Annulus, Disk, Grid, GridFunction, Interval, build_grid
from .hamiltonian import (
    DataFunction,
    Exponents,
    ProblemSpec,
    data_library,
    make_exponents,
)
from .kernels import BACKEND
from .first_order import (
    make_scheme,
    solve_semi_lagrangian,
    solve_upwind_fd,
)
from .viscous import ViscousScheme, solve_maximal_viscous
from .analysis import theoretical_constants
from .experiments import SweepPlan, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Annulus",
    "BACKEND",
    "DataFunction",
    "Disk",
    "Exponents",
    "Grid",
    "GridFunction",
    "Interval",
    "ProblemSpec",
    "SweepPlan",
    "ViscousScheme",
    "build_grid",
    "data_library",
    "make_exponents",
    "make_scheme",
    "run_sweep",
    "solve_maximal_viscous",
    "solve_semi_lagrangian",
    "solve_upwind_fd",
    "theoretical_constants",
    "__version__",
]
