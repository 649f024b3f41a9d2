"""Mesh-refinement studies: error per mesh, observed orders, per-stage columns."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import NarrowStencilError
from ..core.grid import Grid, GridFunction
from ..core.problems import ProblemDef
from ..core.scheme import SchemeParams
from ..core.solver import SolveConfig, grid_for, solve_continuation, solve_linear

logger = logging.getLogger(__name__)

CSV_HEADER = ("h_axis", "h_diag", "error_linf", "order")


def linf_error(U: GridFunction, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """Max of ``|U - exact|`` over interior and boundary nodes (ghosts excluded)."""
    grid = U.grid
    ids = grid.real_ids
    diff = U.values[ids] - np.asarray(exact(grid.coordinates(ids)), dtype=float)
    return float(np.max(np.abs(diff)))


def observed_orders(errors: Sequence[Optional[float]], hs: Sequence[float]) -> List[Optional[float]]:
    """``log(e_{k-1} / e_k) / log(h_{k-1} / h_k)``; ``None`` for the first row and undefined pairs."""
    orders: List[Optional[float]] = [None]
    for k in range(1, len(errors)):
        e0, e1, h0, h1 = errors[k - 1], errors[k], hs[k - 1], hs[k]
        if e0 is None or e1 is None or e0 <= 0 or e1 <= 0 or h0 == h1:
            orders.append(None)
        else:
            orders.append(math.log(e0 / e1) / math.log(h0 / h1))
    return orders


@dataclass
class ConvergenceRow:
    mesh: int
    h_axis: float
    h_diag: float
    error_linf: Optional[float] = None
    order: Optional[float] = None
    converged: bool = False
    iterations: int = 0
    wall_time: float = 0.0
    stage_errors: Dict[str, float] = field(default_factory=dict)
    stage_orders: Dict[str, Optional[float]] = field(default_factory=dict)
    flag: Optional[str] = None

    def csv_row(self) -> Tuple[Any, ...]:
        return (self.h_axis, self.h_diag, self.error_linf, self.order)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mesh": self.mesh,
            "h_axis": self.h_axis,
            "h_diag": self.h_diag,
            "error_linf": self.error_linf,
            "order": self.order,
            "converged": self.converged,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "stage_errors": self.stage_errors,
            "stage_orders": self.stage_orders,
            "flag": self.flag,
        }


@dataclass
class ConvergenceTable:
    """Rows of a refinement study plus what produced them."""
    problem: str
    params: str
    schedule: List[Tuple[float, float]]
    h_measure: str
    rows: List[ConvergenceRow] = field(default_factory=list)
    seed: int = 42

    @property
    def errors(self) -> List[Optional[float]]:
        return [r.error_linf for r in self.rows]

    @property
    def orders(self) -> List[Optional[float]]:
        return [r.order for r in self.rows]

    def h(self, row: ConvergenceRow) -> float:
        return row.h_axis if self.h_measure == "h_axis" else row.h_diag

    def stage_labels(self) -> List[str]:
        labels: List[str] = []
        for row in self.rows:
            labels.extend(k for k in row.stage_errors if k not in labels)
        return labels

    def stage_column(self, label: str) -> List[Optional[float]]:
        return [row.stage_errors.get(label) for row in self.rows]

    def compute_orders(self) -> None:
        hs = [self.h(r) for r in self.rows]
        for row, order in zip(self.rows, observed_orders(self.errors, hs)):
            row.order = order
        for label in self.stage_labels():
            for row, order in zip(self.rows, observed_orders(self.stage_column(label), hs)):
                row.stage_orders[label] = order
        for k in range(1, len(self.rows)):
            if hs[k] == hs[k - 1]:
                self.rows[k].flag = self.rows[k].flag or "degenerate refinement"

    def csv_rows(self) -> List[Tuple[Any, ...]]:
        return [row.csv_row() for row in self.rows]

    def stage_csv_rows(self) -> List[Tuple[Any, ...]]:
        """``(mesh, h, stage, error, order)`` for every recorded stage."""
        out = []
        for row in self.rows:
            for label, err in row.stage_errors.items():
                out.append((row.mesh, self.h(row), label, err, row.stage_orders.get(label)))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "params": self.params,
            "schedule": [list(s) for s in self.schedule],
            "h_measure": self.h_measure,
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
        }

    def summary(self) -> str:
        lines = [f"{self.problem} [{self.params}] ({self.h_measure})"]
        for row in self.rows:
            err = f"{row.error_linf:.3e}" if row.error_linf is not None else "   --    "
            order = f"{row.order:.2f}" if row.order is not None else "--"
            lines.append(f"  n={row.mesh:<5d} h={self.h(row):.3e}  error={err}  order={order}" + (f"  [{row.flag}]" if row.flag else ""))
        return "\n".join(lines)


def _check_meshes(meshes: Sequence[int]) -> None:
    if not meshes:
        raise ValueError("at least one mesh is required")
    for a, b in zip(meshes, meshes[1:]):
        if b < a:
            raise ValueError(f"meshes must refine monotonically, got {a} then {b}")


def _solve_mesh(
    problem: ProblemDef,
    mesh: int,
    grid: Grid,
    params: SchemeParams,
    schedule: Optional[List[Tuple[float, float]]],
    config: SolveConfig,
    warm_problem: Optional[ProblemDef],
) -> ConvergenceRow:
    row = ConvergenceRow(mesh=int(mesh), h_axis=grid.h_axis, h_diag=grid.h_diag)
    exact = problem.exact_u
    try:
        if schedule is None:
            U, report = solve_linear(grid, problem, params, config)
            stages = [(report.stage_history[0], U)]
        else:
            result = solve_continuation(grid, problem, schedule, config, params, warm_problem=warm_problem)
            U, report = result.solution, result.report
            records = [s for s in report.stage_history if s.label != "warm_start"]
            offset = len(result.stages) - len(records)
            stages = []
            for rec, stage_U in zip(records, result.stages[offset:]):
                if rec.converged:
                    stages.append((rec, stage_U))
    except NarrowStencilError as exc:
        row.flag = f"solve failed: {exc}"
        logger.warning("mesh %d: %s", row.mesh, row.flag)
        return row

    row.converged = report.converged
    row.iterations = report.iterations
    row.wall_time = report.wall_time
    if exact is None:
        row.flag = "no exact solution"
        return row
    for rec, stage_U in stages:
        rec.error_linf = linf_error(stage_U, exact)
        row.stage_errors[f"gamma={rec.gamma:g},sigma={rec.sigma:g}"] = rec.error_linf
    if report.converged:
        row.error_linf = linf_error(U, exact)
    else:
        row.flag = f"solve failed: {report.failure or 'not converged'}"
    return row


def run_convergence(
    problem: ProblemDef,
    params: Optional[SchemeParams] = None,
    meshes: Sequence[int] = (),
    schedule: Optional[Sequence[Tuple[float, float]]] = None,
    config: Optional[SolveConfig] = None,
    warm_problem: Optional[ProblemDef] = None,
    workers: int = 1,
    seed: int = 42,
    convention: Optional[str] = None,
) -> ConvergenceTable:
    """Solve on every mesh and tabulate errors and observed orders.

    ``schedule=None`` uses a single direct solve for linear problems and the
    config's continuation schedule otherwise. Failures are recorded in-row.
    """
    _check_meshes(meshes)
    params = params or SchemeParams()
    config = config or SolveConfig()
    if schedule is None and not problem.linear:
        schedule = config.continuation
    sched = [(float(g), float(s)) for g, s in schedule] if schedule is not None else None

    grids = [grid_for(problem, n, convention) for n in meshes]
    h_measure = "h_axis" if problem.mesh_convention == "interior" else "h_diag"
    table = ConvergenceTable(problem.name, params.label() if sched is None else params.moment_mode, sched or [(params.gamma, params.sigma)], h_measure, seed=seed)

    logger.info("convergence study for %s on %d meshes", problem.name, len(grids))

    def task(job: Tuple[int, Grid]) -> ConvergenceRow:
        return _solve_mesh(problem, job[0], job[1], params, sched, config, warm_problem)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(task, zip(meshes, grids)))
    else:
        rows = [task(job) for job in zip(meshes, grids)]
    table.rows = rows
    table.compute_orders()
    logger.info("\n%s", table.summary())
    return table
