#!/usr/bin/env python3
"""
Command-line front end for narrowstencil.

Runs single solves, mesh-refinement studies, the verification batteries and
grid dumps, writing CSV/JSON artifacts into the configured output directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .config import COMMANDS, RunConfig, parse_config
from .core.audits import (
    AuditReport,
    audit_consistency,
    audit_elliptic_compat,
    audit_gmonotonicity,
    audit_reduced_form,
)
from .core.errors import ConfigError, NarrowStencilError, VerificationError
from .core.fd_ops import AuxiliaryCondition
from .core.grid import GridFunction
from .core.problems import PROBLEM_NAMES, ControlSet, ProblemDef, audit_partials, get_problem
from .core.scheme import DiscreteSystem, SchemeParams
from .core.solver import SolveConfig, estimate_rho, grid_for, solve_continuation, solve_linear
from .harness.convergence import CSV_HEADER, linf_error, run_convergence
from .harness.lemmas import run_all
from .harness.reference import reference_ratios
from .utils.output_writer import ArtifactWriter

logger = logging.getLogger(__name__)

DEFAULT_MESHES = {
    "linear1": (10, 40, 80, 120),
    "linear2": (10, 40, 80, 120),
    "hjb": (10, 16, 24, 32),
    "monge_ampere": (6, 12, 24, 48),
    "gauss_curvature": (6, 12, 24, 48),
    "poisson": (6, 12, 24, 48),
}
AUDIT_MESH = 12


class SolveFailure(NarrowStencilError):
    """A solve or a convergence row did not converge."""

    exit_code = 3


class Runner:
    """Executes one configured command."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.writer = ArtifactWriter(config.output.directory)
        c = config.controls
        self.problem = get_problem(config.problem, ControlSet(c.phi_count, c.rot_count))

    # --------------------------------------------------------------- builders
    def params(self) -> SchemeParams:
        s = self.config.scheme
        return SchemeParams(
            gamma=s.gamma,
            sigma=s.sigma,
            moment_mode=s.moment_mode,
            fixed_weight=s.fixed_weight,
            unsafe=s.unsafe,
            aux=AuxiliaryCondition(s.aux_mode, s.aux_eta),
        )

    def solve_config(self) -> SolveConfig:
        v = self.config.solver
        return SolveConfig(
            method=v.method,
            newton_tol=v.newton_tol,
            newton_max_iter=v.newton_max_iter,
            damping=v.damping,
            max_halvings=v.max_halvings,
            step_tol=v.step_tol,
            rho=v.rho if v.rho is not None else SolveConfig.rho,
            max_sweeps=v.max_sweeps,
            pseudo_tol=v.pseudo_tol,
            divergence_window=v.divergence_window,
            continuation=list(v.schedule),
            initial_guess=v.initial_guess,
            linear_solver=v.linear_solver,
        )

    def meshes(self) -> List[int]:
        return list(self.config.mesh.sizes) or list(DEFAULT_MESHES.get(self.problem.name, DEFAULT_MESHES["poisson"]))

    def warm_problem(self) -> Optional[ProblemDef]:
        c = self.config.controls
        if c.warm_start and self.problem.controls is not None:
            return get_problem(self.problem.name, ControlSet(c.warm_phi_count, c.warm_rot_count))
        return None

    def _pseudo_rho(self, grid, solve_config: SolveConfig) -> None:
        if solve_config.method == "pseudo_time" and self.config.solver.rho is None:
            first = self.params().with_moment(*solve_config.continuation[0])
            solve_config.rho = estimate_rho(grid, self.problem, first, seed=self.config.seed)
            logger.info("pseudo-time step estimated as rho=%.3e", solve_config.rho)

    # --------------------------------------------------------------- commands
    def solve(self) -> int:
        n = self.meshes()[-1]
        grid = grid_for(self.problem, n, self.config.mesh.convention)
        params = self.params()
        solve_config = self.solve_config()
        logger.info("solving %s on %s", self.problem.name, grid)

        if self.problem.linear and solve_config.method == "linear_direct":
            U, report = solve_linear(grid, self.problem, params, solve_config)
        else:
            self._pseudo_rho(grid, solve_config)
            result = solve_continuation(
                grid, self.problem, solve_config.continuation, solve_config, params, warm_problem=self.warm_problem()
            )
            U, report = result.solution, result.report

        payload: Dict[str, Any] = {"config": self.config.to_dict(), "mesh": n, "report": report.to_dict()}
        exact = None
        if self.problem.exact_u is not None:
            exact = self.problem.exact_u(grid.coordinates(grid.real_ids))
            payload["error_linf"] = linf_error(U, self.problem.exact_u)
        if self.config.output.write_solution:
            self.writer.write_solution(U, f"solution_{n}.csv", exact)
        if self.config.output.write_matrices:
            last = report.stage_history[-1]
            system = DiscreteSystem(grid, self.problem, params.with_moment(last.gamma, last.sigma))
            self.writer.write_matrix(f"jacobian_{n}.mtx", system.jacobian(U.interior())[0], comment=f"{self.problem.name} n={n}")
        self.writer.write_json("report.json", payload)
        if not report.converged:
            raise SolveFailure(f"solve did not converge: {report.failure or 'residual above tolerance'}")
        return 0

    def convergence(self) -> int:
        meshes = self.meshes()
        solve_config = self.solve_config()
        if solve_config.method == "pseudo_time":
            self._pseudo_rho(grid_for(self.problem, meshes[0], self.config.mesh.convention), solve_config)
        schedule = None if self.problem.linear and solve_config.method == "linear_direct" else solve_config.continuation
        table = run_convergence(
            self.problem,
            self.params(),
            meshes,
            schedule,
            solve_config,
            warm_problem=self.warm_problem(),
            workers=self.config.workers,
            seed=self.config.seed,
            convention=self.config.mesh.convention,
        )
        self.writer.write_csv("table.csv", CSV_HEADER, table.csv_rows())
        if self.config.output.write_stage_table:
            self.writer.write_csv("stages.csv", ("mesh", "h", "stage", "error_linf", "order"), table.stage_csv_rows())
        payload = table.to_dict()
        payload["config"] = self.config.to_dict()
        payload["reference_ratios"] = reference_ratios(self.problem.name, meshes, [r.stage_errors for r in table.rows])
        self.writer.write_json("report.json", payload)
        failed = [r.mesh for r in table.rows if r.flag and r.flag.startswith("solve failed")]
        if failed:
            raise SolveFailure(f"convergence rows failed on meshes {failed}")
        return 0

    def verify(self) -> int:
        seed = self.config.seed
        lemmas = run_all(seed=seed)
        audits: List[AuditReport] = []
        partials = []
        c = self.config.controls
        for name in PROBLEM_NAMES:
            problem = get_problem(name, ControlSet(c.phi_count, c.rot_count))
            params = self.params()
            audits.append(audit_consistency(params, problem, seed=seed))
            audits.append(audit_reduced_form(params, problem, seed=seed))
            audits.append(audit_elliptic_compat(params, problem, seed=seed))
            if problem.exact_u is not None:
                grid = grid_for(problem, AUDIT_MESH)
                state = GridFunction.sample(grid, problem.exact_u)
                audits.append(audit_gmonotonicity(state, params, problem))
            partials.append(audit_partials(problem, seed=seed))
        passed = all(r.passed for r in lemmas) and all(a.passed for a in audits) and all(p.passed for p in partials)
        self.writer.write_json(
            "report.json",
            {
                "passed": passed,
                "seed": seed,
                "lemmas": [r.to_dict() for r in lemmas],
                "audits": [a.to_dict() for a in audits],
                "partials": [{**asdict(p), "passed": p.passed} for p in partials],
            },
        )
        if not passed:
            failing = [r.name for r in lemmas if not r.passed] + [a.name for a in audits if not a.passed]
            failing += [f"partials:{p.problem}" for p in partials if not p.passed]
            raise VerificationError(f"verification failed: {', '.join(failing)}")
        logger.info("all verification batteries passed")
        return 0

    def dump_grid(self) -> int:
        n = self.meshes()[0]
        grid = grid_for(self.problem, n, self.config.mesh.convention)
        self.writer.write_grid(grid, f"grid_{n}.csv")
        return 0

    def run(self) -> int:
        handler = {
            "solve": self.solve,
            "convergence": self.convergence,
            "verify": self.verify,
            "dump-grid": self.dump_grid,
        }[self.config.command]
        return handler()


def run(config: RunConfig) -> int:
    """Execute ``config`` and return the exit status; failures write ``failure.json``."""
    writer = ArtifactWriter(config.output.directory)
    try:
        return Runner(config).run()
    except NarrowStencilError as exc:
        logger.error("%s", exc)
        _write_failure(writer, config, exc.to_dict(), exc.exit_code)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - reported, then mapped to exit 1
        logger.error("unexpected error: %s", exc)
        logger.debug("%s", traceback.format_exc())
        _write_failure(writer, config, {"error": type(exc).__name__, "message": str(exc)}, 1)
        return 1


def _write_failure(writer: ArtifactWriter, config: Optional[RunConfig], error: Dict[str, Any], code: int) -> None:
    payload = {"exit_code": code, **error}
    if config is not None:
        payload["command"] = config.command
        payload["problem"] = config.problem
    try:
        writer.write_json("failure.json", payload)
    except OSError as exc:
        logger.error("could not write failure summary: %s", exc)


def _parse_schedule(text: str) -> List[List[float]]:
    """``"1000:0,100:0,0:0"`` -> ``[[1000, 0], [100, 0], [0, 0]]``."""
    try:
        return [[float(a) for a in item.split(":")] for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse schedule {text!r}; expected gamma:sigma,...", keys=["--schedule"]) from exc


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values as a camelCase config fragment."""
    out: Dict[str, Any] = {"command": args.command}
    if args.problem is not None:
        out["problem"] = args.problem
    if args.seed is not None:
        out["seed"] = args.seed
    if args.workers is not None:
        out["workers"] = args.workers
    if args.sides:
        out["sides"] = args.sides
    if args.interior:
        out["interior"] = args.interior

    scheme: Dict[str, Any] = {}
    for flag, key in (("gamma", "gamma"), ("sigma", "sigma"), ("moment_mode", "momentMode"), ("aux_mode", "auxMode")):
        if getattr(args, flag) is not None:
            scheme[key] = getattr(args, flag)
    if args.unsafe:
        scheme["unsafe"] = True
    if scheme:
        out["scheme"] = scheme

    solver: Dict[str, Any] = {}
    for flag, key in (("method", "method"), ("rho", "rho"), ("newton_tol", "newtonTol"), ("linear_solver", "linearSolver")):
        if getattr(args, flag) is not None:
            solver[key] = getattr(args, flag)
    if args.schedule is not None:
        solver["schedule"] = _parse_schedule(args.schedule)
    if solver:
        out["solver"] = solver

    controls: Dict[str, Any] = {}
    if args.phi_count is not None:
        controls["phiCount"] = args.phi_count
    if args.rot_count is not None:
        controls["rotCount"] = args.rot_count
    if args.warm_start:
        controls["warmStart"] = True
    if controls:
        out["controls"] = controls

    if args.output is not None:
        out["output"] = {"directory": args.output}
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narrowstencil",
        description="Narrow-stencil finite-difference solver for fully nonlinear elliptic problems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  narrowstencil verify                                   # lemma batteries and structural audits
  narrowstencil solve --problem monge_ampere --sides 24  # continuation solve, writes solution_24.csv
  narrowstencil convergence --problem linear1 --interior 10 40 80 120
  narrowstencil convergence --problem monge_ampere --sides 6 12 24 48 \\
      --schedule=-1000:1000,-100:100,-10:10,-1:1,0:0
  narrowstencil dump-grid --problem hjb --sides 6

Exit codes: 0 success, 2 configuration error, 3 solve failure, 4 verification failure, 1 other.
        """,
    )
    parser.add_argument("command", choices=COMMANDS, help="Command to execute")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--problem", choices=PROBLEM_NAMES, help="Benchmark problem")
    mesh = parser.add_mutually_exclusive_group()
    mesh.add_argument("--sides", type=int, nargs="+", help="Nodes per side (boundary included)")
    mesh.add_argument("--interior", type=int, nargs="+", help="Interior nodes per side")
    parser.add_argument("--gamma", type=float, help="Moment parameter gamma")
    parser.add_argument("--sigma", type=float, help="Moment parameter sigma")
    parser.add_argument("--moment-mode", choices=("auto_Malpha", "fixed_weight"), help="Moment weight")
    parser.add_argument("--aux-mode", choices=("laplacian", "normal"), help="Auxiliary boundary condition")
    parser.add_argument("--unsafe", action="store_true", help="Allow sigma < 0 or gamma + sigma < 0")
    parser.add_argument("--schedule", help="Continuation stages as gamma:sigma,gamma:sigma,...")
    parser.add_argument("--method", choices=("linear_direct", "newton", "pseudo_time"), help="Solver")
    parser.add_argument("--rho", type=float, help="Pseudo-time step (estimated when omitted)")
    parser.add_argument("--newton-tol", type=float, help="Residual tolerance")
    parser.add_argument("--linear-solver", choices=("auto", "lu", "cg"), help="Linear solver for Newton steps")
    parser.add_argument("--phi-count", type=int, help="HJB controls per phi axis")
    parser.add_argument("--rot-count", type=int, help="HJB controls per rotation axis")
    parser.add_argument("--warm-start", action="store_true", help="Coarse-control warm start for HJB")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--workers", type=int, help="Parallel meshes in convergence runs")
    parser.add_argument("-o", "--output", help="Output directory")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)-7s %(name)s: %(message)s", force=True)


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point for the narrowstencil CLI."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = parse_config(args.config, overrides_from_args(args))
    except ConfigError as exc:
        logger.error("%s", exc)
        output = Path(args.output or "results")
        _write_failure(ArtifactWriter(output), None, exc.to_dict(), exc.exit_code)
        sys.exit(exc.exit_code)
    sys.exit(run(config))


if __name__ == "__main__":
    main()
