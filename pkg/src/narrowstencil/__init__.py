"""narrowstencil: narrow-stencil g-monotone finite-difference methods for
fully nonlinear second-order elliptic Dirichlet problems."""

from __future__ import annotations

from .core.errors import NarrowStencilError
from .core.grid import Domain, Grid, GridFunction, build_grid
from .core.problems import ProblemDef, get_problem
from .core.scheme import DiscreteSystem, SchemeParams
from .core.solver import (
    SolveConfig,
    solve_continuation,
    solve_linear,
    solve_newton,
    solve_pseudo_time,
)

__version__ = "1.0.0"

__all__ = [
    "Domain",
    "Grid",
    "GridFunction",
    "build_grid",
    "ProblemDef",
    "get_problem",
    "SchemeParams",
    "DiscreteSystem",
    "SolveConfig",
    "solve_linear",
    "solve_newton",
    "solve_pseudo_time",
    "solve_continuation",
    "NarrowStencilError",
]
