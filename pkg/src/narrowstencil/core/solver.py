"""Solvers for the discrete system: direct linear solve, damped Newton,
forward-Euler pseudo-time and the gamma/sigma continuation driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CapabilityError, DivergenceError, SolverError
from .fd_ops import diff1, hessian_bundle
from .grid import Grid, GridFunction, build_grid, counts_from_interior
from .problems import ProblemDef
from .scheme import DiscreteSystem, SchemeParams, assemble_residual, local_fhat
from .stats import SolveMonitor, SolveReport

logger = logging.getLogger(__name__)

METHODS = ("linear_direct", "newton", "pseudo_time")
DAMPING = ("none", "backtracking")
LINEAR_SOLVERS = ("auto", "lu", "cg")
INITIAL_GUESSES = ("zero", "given", "previous_stage")

GAMMA_SCHEDULE: Tuple[Tuple[float, float], ...] = ((1000, 0), (100, 0), (10, 0), (1, 0), (0, 0))
SIGMA_SCHEDULE: Tuple[Tuple[float, float], ...] = ((0, 1000), (0, 100), (0, 10), (0, 1), (0, 0))
BALANCED_SCHEDULE: Tuple[Tuple[float, float], ...] = ((-1000, 1000), (-100, 100), (-10, 10), (-1, 1))


@dataclass
class SolveConfig:
    """Iteration controls shared by every solver."""
    method: str = "newton"
    newton_tol: float = 1e-10
    newton_max_iter: int = 100
    damping: str = "backtracking"
    max_halvings: int = 30
    step_tol: float = 1e-12
    rho: float = 1e-3
    max_sweeps: int = 100000
    pseudo_tol: float = 1e-12
    divergence_window: int = 50
    continuation: List[Tuple[float, float]] = field(default_factory=lambda: list(GAMMA_SCHEDULE))
    initial_guess: str = "previous_stage"
    linear_solver: str = "auto"

    def __post_init__(self) -> None:
        self.continuation = [(float(g), float(s)) for g, s in self.continuation]


# ----------------------------------------------------------- linear algebra
def _condition_estimate(A: sp.spmatrix) -> Optional[float]:
    if A.shape[0] > 2000:
        return None
    with np.errstate(all="ignore"):
        return float(np.linalg.cond(A.toarray(), 1))


def is_symmetric(A: sp.spmatrix, rtol: float = 1e-12) -> bool:
    scale = abs(A).max() if A.nnz else 0.0
    return abs(A - A.T).max() <= rtol * max(scale, 1.0) if A.nnz else True


def sparse_solve(A: sp.spmatrix, b: np.ndarray, method: str = "lu") -> np.ndarray:
    """Solve ``A x = b``; ``auto`` tries CG on symmetric matrices before LU."""
    A = sp.csc_matrix(A)
    if method in ("auto", "cg") and is_symmetric(A):
        x, info = spla.cg(A, b, rtol=1e-14, atol=0.0, maxiter=10 * A.shape[0])
        r = np.abs(A @ x - b).max() if len(b) else 0.0
        if info == 0 and r <= 1e-10 * (1.0 + np.abs(b).max()):
            return x
        logger.debug("conjugate gradient stopped with info=%d residual=%.3e; switching to LU", info, r)
    try:
        x = spla.splu(A, permc_spec="COLAMD").solve(b)
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}", _condition_estimate(A)) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse LU produced non-finite values", _condition_estimate(A))
    return x


def _initial(system: DiscreteSystem, U0: Optional[GridFunction]) -> np.ndarray:
    return np.zeros(system.size) if U0 is None else np.asarray(U0.interior(), dtype=float).copy()


def _linf(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


# ------------------------------------------------------------------ linear
def solve_linear(
    grid: Grid,
    problem: ProblemDef,
    params: SchemeParams,
    config: Optional[SolveConfig] = None,
) -> Tuple[GridFunction, SolveReport]:
    """Assemble ``L U = b`` once and solve it (affine problems only)."""
    config = config or SolveConfig(method="linear_direct")
    system = DiscreteSystem(grid, problem, params)
    L, b = system.linear_system()
    # residual tolerance scales with the data
    tolerance = 1e-10 * (1.0 + _linf(b))
    monitor = SolveMonitor("linear_direct", tolerance)
    monitor.start_stage(params.gamma, params.sigma, "linear")
    u = sparse_solve(L, b, config.linear_solver)
    algebraic = _linf(L @ u - b)
    if algebraic > tolerance:
        raise SolverError(f"linear residual {algebraic:.3e} above tolerance", _condition_estimate(L))
    residual = _linf(system.residual(u))
    monitor.record_iteration(residual)
    monitor.end_stage(residual <= tolerance, residual)
    return system.extend(u), monitor.finish(True, residual)


# ------------------------------------------------------------------ Newton
def _newton(system: DiscreteSystem, u: np.ndarray, config: SolveConfig, monitor: SolveMonitor) -> Tuple[np.ndarray, float, Optional[str]]:
    r = system.residual(u)
    res = _linf(r)
    best_u, best_res = u.copy(), res
    failure = None
    for _ in range(config.newton_max_iter):
        if not np.isfinite(res):
            raise DivergenceError("Newton residual became NaN")
        if res <= config.newton_tol:
            break
        try:
            J, _ = system.jacobian(u)
        except CapabilityError:
            logger.warning("falling back to a finite-difference Jacobian for %s", system.problem.name)
            J = system.fd_jacobian(u)
        try:
            du = sparse_solve(J, -r, config.linear_solver)
        except SolverError as exc:
            failure = f"jacobian solve: {exc}"
            logger.warning("Newton stopped: %s", failure)
            break

        t, accepted = 1.0, False
        halvings = config.max_halvings if config.damping == "backtracking" else 0
        for _ in range(halvings + 1):
            trial = u + t * du
            r_trial = system.residual(trial)
            res_trial = _linf(r_trial)
            if np.isfinite(res_trial) and (res_trial < res or config.damping == "none"):
                accepted = True
                break
            t *= 0.5
        if not accepted and not np.isfinite(res_trial):
            raise DivergenceError(f"Newton trial residual is not finite at every damping down to {t * 2:g}")
        if not accepted:
            failure = "line search failed"
            logger.warning("Newton stopped: no decrease after %d halvings (residual %.3e)", halvings, res)
            break
        step = _linf(t * du)
        u, r, res = trial, r_trial, res_trial
        monitor.record_iteration(res)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("newton it=%d residual=%.3e step=%.3e damping=%g", monitor.report.iterations, res, step, t)
        if res < best_res:
            best_u, best_res = u.copy(), res
        if step <= config.step_tol:
            break
    if not np.isfinite(res):
        raise DivergenceError("Newton residual became NaN")
    if failure is None and best_res > config.newton_tol:
        failure = "iteration limit" if monitor.stage and monitor.stage.iterations >= config.newton_max_iter else "stagnated"
    return best_u, best_res, failure


def solve_newton(
    grid: Grid,
    problem: ProblemDef,
    params: SchemeParams,
    config: Optional[SolveConfig] = None,
    U0: Optional[GridFunction] = None,
) -> Tuple[GridFunction, SolveReport]:
    """Damped Newton; never raises on plain non-convergence."""
    config = config or SolveConfig()
    system = DiscreteSystem(grid, problem, params)
    monitor = SolveMonitor("newton", config.newton_tol)
    monitor.start_stage(params.gamma, params.sigma, "newton")
    u, res, failure = _newton(system, _initial(system, U0), config, monitor)
    converged = res <= config.newton_tol
    monitor.end_stage(converged, res, failure)
    return system.extend(u), monitor.finish(converged, res, failure)


# ------------------------------------------------------------- pseudo-time
def _pseudo_time(
    system: DiscreteSystem, u: np.ndarray, rho: float, config: SolveConfig, monitor: SolveMonitor
) -> Tuple[np.ndarray, float, Optional[float], float]:
    """Returns ``(u, residual, contraction ratio, residual tolerance met at the stop)``."""
    if rho < 0:
        raise ValueError(f"pseudo time-step must be nonnegative, got {rho}")
    r = system.residual(u)
    if rho == 0:
        return u, _linf(r), None, config.newton_tol
    steps: List[float] = []
    above_one = 0
    ratio = None
    tolerance = config.newton_tol
    for _ in range(config.max_sweeps):
        if not np.all(np.isfinite(r)):
            raise DivergenceError(f"pseudo-time residual became NaN; try a smaller rho than {rho:g}")
        du = -rho * r
        u = u + du
        size = float(np.linalg.norm(du))
        if steps and steps[-1] > 0:
            ratio = size / steps[-1]
            above_one = above_one + 1 if ratio >= 1.0 else 0
            if above_one >= config.divergence_window:
                raise DivergenceError(
                    f"pseudo-time map expanded for {above_one} consecutive sweeps "
                    f"(ratio {ratio:.4f}); try a smaller rho than {rho:g}"
                )
        steps.append(size)
        r = system.residual(u)
        monitor.record_iteration(_linf(r))
        bound = config.pseudo_tol * float(np.linalg.norm(u))
        if size <= bound:
            # |r|_inf <= |r|_2 = |du|_2 / rho at the stop
            tolerance = max(config.newton_tol, bound / rho)
            break
    window = min(10, len(steps) - 1)
    if window > 0 and steps[-1 - window] > 0 and steps[-1] > 0:
        ratio = (steps[-1] / steps[-1 - window]) ** (1.0 / window)
    return u, _linf(r), ratio, tolerance


def solve_pseudo_time(
    grid: Grid,
    problem: ProblemDef,
    params: SchemeParams,
    config: Optional[SolveConfig] = None,
    U0: Optional[GridFunction] = None,
) -> Tuple[GridFunction, SolveReport]:
    """Iterate ``U <- U - rho F^[U]`` on interior nodes until the update stalls."""
    config = config or SolveConfig(method="pseudo_time")
    system = DiscreteSystem(grid, problem, params)
    monitor = SolveMonitor("pseudo_time", config.newton_tol)
    monitor.start_stage(params.gamma, params.sigma, "pseudo_time")
    u, res, ratio, tolerance = _pseudo_time(system, _initial(system, U0), config.rho, config, monitor)
    monitor.report.tolerance = tolerance
    converged = res <= tolerance
    failure = None if converged else "sweep limit"
    monitor.end_stage(converged, res, failure)
    report = monitor.finish(converged, res, failure)
    report.contraction_ratio = ratio
    return system.extend(u), report


def estimate_rho(
    grid: Grid,
    problem: ProblemDef,
    params: SchemeParams,
    U: Optional[GridFunction] = None,
    iterations: int = 30,
    safety: float = 1.0,
    seed: int = 42,
) -> float:
    """``safety / lambda_max`` from power iterations on the frozen Jacobian."""
    system = DiscreteSystem(grid, problem, params)
    J, _ = system.jacobian(_initial(system, U))
    z = np.random.default_rng(seed).normal(size=system.size)
    lam = 0.0
    for _ in range(iterations):
        w = J @ z
        lam = float(np.linalg.norm(w) / np.linalg.norm(z))
        z = w / np.linalg.norm(w)
    logger.debug("power iteration estimate lambda_max=%.4e", lam)
    return safety / lam


# ------------------------------------------------------------ continuation
@dataclass
class ContinuationResult:
    """Final iterate plus the iterate of every attempted stage."""
    solution: GridFunction
    report: SolveReport
    stages: List[GridFunction] = field(default_factory=list)


def _verify_stage(system: DiscreteSystem, u: np.ndarray) -> float:
    # residual recomputed from scratch on a fresh grid function
    fresh = assemble_residual(system.extend(u), system.params, system.problem)
    return fresh.linf


def solve_continuation(
    grid: Grid,
    problem: ProblemDef,
    schedule: Optional[Sequence[Tuple[float, float]]] = None,
    config: Optional[SolveConfig] = None,
    base_params: Optional[SchemeParams] = None,
    U0: Optional[GridFunction] = None,
    warm_problem: Optional[ProblemDef] = None,
) -> ContinuationResult:
    """Solve a sequence of ``(gamma, sigma)`` stages, each warm-started from the last.

    ``warm_problem`` (a cheaper variant, e.g. a coarse control sample) is
    solved with the first stage's parameters before the schedule starts.
    Stops at the first failing stage.
    """
    config = config or SolveConfig()
    schedule = list(schedule if schedule is not None else config.continuation)
    if not schedule:
        raise ValueError("continuation schedule is empty")
    base = base_params or SchemeParams()
    monitor = SolveMonitor(f"continuation/{config.method}", config.newton_tol)
    system = DiscreteSystem(grid, problem, base.with_moment(*schedule[0]))
    u = _initial(system, U0)
    stages: List[GridFunction] = []

    plan = [(problem, g, s, f"gamma={g:g},sigma={s:g}") for g, s in schedule]
    if warm_problem is not None:
        g, s = schedule[0]
        plan.insert(0, (warm_problem, g, s, "warm_start"))

    res, failure = float("inf"), None
    tolerance = config.newton_tol
    for stage_problem, gamma, sigma, label in plan:
        params = base.with_moment(gamma, sigma)
        stage_system = DiscreteSystem(grid, stage_problem, params) if stage_problem is not problem else system.with_params(params)
        if config.initial_guess == "zero" and label != "warm_start":
            u = np.zeros(stage_system.size)
        monitor.start_stage(gamma, sigma, label)
        try:
            if config.method == "pseudo_time":
                u, res, _, stage_tol = _pseudo_time(stage_system, u, config.rho, config, monitor)
                tolerance = max(tolerance, stage_tol)
                failure = None if res <= stage_tol else "sweep limit"
            else:
                u, res, failure = _newton(stage_system, u, config, monitor)
        except DivergenceError as exc:
            failure = str(exc)
            res = float("inf")
        converged = failure is None and res <= tolerance
        if converged:
            monitor.stage.verified_residual = _verify_stage(stage_system, u)
            converged = monitor.stage.verified_residual <= tolerance
        stages.append(stage_system.extend(u) if np.all(np.isfinite(u)) else GridFunction.zeros(grid))
        monitor.end_stage(converged, res, failure)
        if not converged:
            failure = failure or "stage did not converge"
            logger.warning("continuation aborted at %s", label)
            break
    else:
        failure = None

    monitor.report.tolerance = tolerance
    report = monitor.finish(failure is None, res, failure)
    final = stages[-1] if stages else system.extend(u)
    return ContinuationResult(final, report, stages)


# ------------------------------------------------------------------ HJB
@dataclass
class ControlChoice:
    index: int
    phi_index: int
    rotation_index: int
    phi: float
    angle: float


def hjb_pointwise_min(
    U: GridFunction, node: int, problem: ProblemDef, params: Optional[SchemeParams] = None
) -> Tuple[float, ControlChoice]:
    """Minimum over the sampled controls of the per-control scheme at ``node``.

    Ties go to the lexicographically first ``(phi index, rotation index)``.
    """
    fam = problem.controls
    if fam is None:
        raise CapabilityError(f"problem {problem.name} has no control family")
    params = params or SchemeParams()
    grid = U.grid
    bundle = hessian_bundle(U, node)
    q = np.array([diff1(U, i, "central", node) for i in range(grid.dim)])
    ev = local_fhat(
        problem, params, bundle.dtilde[None], bundle.dhat[None], q[None], U.values[[node]], grid.coordinates([node])
    )
    k = int(ev.argmin[0])
    phi_index, rotation_index = (int(a) for a in fam.labels[k])
    return float(ev.value[0]), ControlChoice(k, phi_index, rotation_index, float(fam.phi[k]), float(fam.angle[k]))


def grid_for(problem: ProblemDef, n: int, convention: Optional[str] = None) -> Grid:
    """Grid for mesh parameter ``n``: interior counts or side counts (default: the problem's convention)."""
    convention = problem.mesh_convention if convention in (None, "auto") else convention
    counts = counts_from_interior(n, problem.dim) if convention == "interior" else (n,) * problem.dim
    return build_grid(problem.domain, counts)
