"""Narrow-stencil operator ``F^_{gamma,sigma}``: residual and Jacobian.

    F^[U] = F(D-bar^2 U, grad-bar U, U, x) + (M + gamma I + sigma 1) : (D~^2 U - D^^2 U)

with ``M = 1/2 |dF/dP|`` evaluated at ``D-bar^2 U`` (``auto_Malpha``) or a fixed
matrix (``fixed_weight``). Problems carrying a control family are evaluated
control by control, each with its own upwinded Hessian, and minimized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import CapabilityError, ProblemEvaluationError, SchemeParameterError
from .fd_ops import (
    DEFAULT_AUX,
    AuxiliaryCondition,
    NodeFields,
    diff1,
    extend,
    hessian_bundle,
    interior_fields,
    operator_set,
)
from .grid import Grid, GridFunction
from .problems import ProblemDef

logger = logging.getLogger(__name__)

MOMENT_MODES = ("auto_Malpha", "fixed_weight")


@dataclass(frozen=True)
class SchemeParams:
    """Moment parameters; ``sigma >= 0`` and ``gamma + sigma >= 0`` unless ``unsafe``."""
    gamma: float = 0.0
    sigma: float = 0.0
    moment_mode: str = "auto_Malpha"
    fixed_weight: Optional[Tuple[Tuple[float, ...], ...]] = None
    unsafe: bool = False
    aux: AuxiliaryCondition = DEFAULT_AUX

    def __post_init__(self) -> None:
        if self.moment_mode not in MOMENT_MODES:
            raise SchemeParameterError(
                f"moment_mode must be one of {MOMENT_MODES}, got {self.moment_mode!r}"
            )
        if self.moment_mode == "fixed_weight" and self.fixed_weight is None:
            raise SchemeParameterError("fixed_weight mode needs a weight matrix")
        if self.fixed_weight is not None:
            object.__setattr__(
                self, "fixed_weight", tuple(tuple(float(a) for a in row) for row in self.fixed_weight)
            )
        if not self.unsafe and (self.sigma < 0 or self.gamma + self.sigma < 0):
            raise SchemeParameterError(
                f"moment requires sigma >= 0 and gamma + sigma >= 0, got gamma={self.gamma}, sigma={self.sigma}"
            )

    @classmethod
    def fixed(cls, weight: np.ndarray, gamma: float = 0.0, sigma: float = 0.0, **kwargs) -> SchemeParams:
        return cls(gamma, sigma, "fixed_weight", tuple(map(tuple, np.asarray(weight, float))), **kwargs)

    def shift(self, dim: int) -> np.ndarray:
        """``gamma I + sigma 1``."""
        return self.gamma * np.eye(dim) + self.sigma * np.ones((dim, dim))

    def with_moment(self, gamma: float, sigma: float) -> SchemeParams:
        return replace(self, gamma=float(gamma), sigma=float(sigma))

    def label(self) -> str:
        return f"gamma={self.gamma:g},sigma={self.sigma:g}"


@dataclass
class LocalEvaluation:
    """Operator values at a batch of states plus what the Jacobian reuses."""
    value: np.ndarray
    weight: np.ndarray
    argmin: Optional[np.ndarray] = None


@dataclass
class Residual:
    values: np.ndarray
    boundary_misfit: float = 0.0

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _check_finite(values: np.ndarray, x: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = int(np.flatnonzero(bad.reshape(len(x), -1).any(axis=1))[0])
        raise ProblemEvaluationError(f"{what} is not finite", x[k])


def numeric_dF_dP(problem: ProblemDef, P, q, v, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference ``dF/dP`` for problems without analytic partials."""
    d = P.shape[-1]
    out = np.empty_like(P)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = step
            out[:, i, j] = (problem.eval_F(P + E, q, v, x) - problem.eval_F(P - E, q, v, x)) / (2 * step)
    return out


def moment_weight(problem: ProblemDef, params: SchemeParams, pbar, q, v, x) -> np.ndarray:
    """``M + gamma I + sigma 1`` for a non-control problem."""
    d = problem.dim
    if params.moment_mode == "fixed_weight":
        M = np.broadcast_to(np.asarray(params.fixed_weight), (len(v), d, d))
    else:
        if problem.dF_dP is not None:
            FP = problem.dF_dP(pbar, q, v, x)
        else:
            logger.warning("problem %s has no dF/dP; estimating the moment weight numerically", problem.name)
            FP = numeric_dF_dP(problem, pbar, q, v, x)
        M = 0.5 * np.abs(FP)
    return M + params.shift(d)


def local_fhat(
    problem: ProblemDef,
    params: SchemeParams,
    ptilde: np.ndarray,
    phat: np.ndarray,
    q: np.ndarray,
    v: np.ndarray,
    x: np.ndarray,
    frozen: Optional[LocalEvaluation] = None,
) -> LocalEvaluation:
    """Operator in reduced form at a batch of states.

    ``frozen`` pins the moment weight (and the control choice, if any) to a
    previous evaluation.
    """
    diff = ptilde - phat
    pbar = 0.5 * (ptilde + phat)
    if problem.controls is not None:
        return _local_controls(problem, params, pbar, diff, v, x, frozen)

    F = problem.eval_F(pbar, q, v, x)
    _check_finite(F, x, f"F of problem {problem.name}")
    W = frozen.weight if frozen is not None else moment_weight(problem, params, pbar, q, v, x)
    return LocalEvaluation(F + np.einsum("nij,nij->n", W, diff), W)


def _local_controls(problem, params, pbar, diff, v, x, frozen):
    fam = problem.controls
    d = problem.dim
    shift = params.shift(d)
    if params.moment_mode == "fixed_weight":
        own = np.broadcast_to(np.asarray(params.fixed_weight), fam.diffusion.shape)
    else:
        own = 0.5 * np.abs(fam.diffusion)
    source = problem.source(x)

    if frozen is not None and frozen.argmin is not None:
        k = frozen.argmin
        value = (
            -np.einsum("nij,nij->n", fam.diffusion[k], pbar)
            + fam.reaction * v
            + fam.offsets[k]
            + np.einsum("nij,nij->n", frozen.weight, diff)
            - source
        )
        return LocalEvaluation(value, frozen.weight, k)

    objective = (
        fam.values(pbar, v)
        + np.einsum("kij,nij->nk", own, diff)
        + np.einsum("ij,nij->n", shift, diff)[:, None]
    )
    _check_finite(objective, x, "control objective")
    k = np.argmin(objective, axis=1)
    value = objective[np.arange(len(k)), k] - source
    return LocalEvaluation(value, own[k] + shift, k)


def local_partials(
    problem: ProblemDef, pbar, q, v, x, evaluation: LocalEvaluation
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(dF/dP, dF/dq, dF/dv)`` at the states; controls use the selected branch."""
    if problem.controls is not None:
        fam = problem.controls
        k = evaluation.argmin
        return -fam.diffusion[k], np.zeros_like(q), np.full_like(v, fam.reaction)
    if not problem.has_partials:
        raise CapabilityError(f"problem {problem.name} does not provide analytic partials")
    FP = problem.dF_dP(pbar, q, v, x)
    Fq = problem.dF_dq(pbar, q, v, x)
    Fv = problem.dF_dv(pbar, q, v, x)
    for arr, what in ((FP, "dF/dP"), (Fq, "dF/dq"), (Fv, "dF/dv")):
        _check_finite(arr, x, what)
    return FP, Fq, Fv


class DiscreteSystem:
    """The scheme on one grid: unknowns are interior values in flat order."""

    def __init__(self, grid: Grid, problem: ProblemDef, params: SchemeParams):
        if grid.dim != problem.dim:
            raise ValueError(f"grid dimension {grid.dim} does not match problem dimension {problem.dim}")
        self.grid = grid
        self.problem = problem
        self.params = params
        coords = grid.coordinates()
        self.x = coords[grid.interior_ids]
        self.boundary_values = np.asarray(problem.boundary_g(coords[grid.boundary_ids]), dtype=float)
        self.ops = operator_set(grid)

    @property
    def size(self) -> int:
        return self.grid.n_interior

    def with_params(self, params: SchemeParams) -> DiscreteSystem:
        clone = object.__new__(DiscreteSystem)
        clone.__dict__.update(self.__dict__)
        clone.params = params
        return clone

    def extend(self, u: np.ndarray) -> GridFunction:
        return extend(self.grid, u, self.boundary_values, self.params.aux)

    def fields(self, u: np.ndarray) -> NodeFields:
        return interior_fields(self.extend(u))

    def evaluate(self, u: np.ndarray, frozen: Optional[LocalEvaluation] = None) -> Tuple[LocalEvaluation, NodeFields]:
        f = self.fields(u)
        return local_fhat(self.problem, self.params, f.dtilde, f.dhat, f.grad, f.value, self.x, frozen), f

    def residual(self, u: np.ndarray, frozen: Optional[LocalEvaluation] = None) -> np.ndarray:
        return self.evaluate(u, frozen)[0].value

    def jacobian(self, u: np.ndarray) -> Tuple[sp.csr_matrix, LocalEvaluation]:
        """Analytic Jacobian with the moment weight (and control) frozen at ``u``."""
        ev, f = self.evaluate(u)
        FP, Fq, Fv = local_partials(self.problem, f.dbar, f.grad, f.value, self.x, ev)
        return self.linearize(FP, Fq, Fv, ev.weight), ev

    def linearize(self, FP, Fq, Fv, W) -> sp.csr_matrix:
        d = self.grid.dim
        ops = self.ops
        J = sp.diags(Fv, format="csr")
        for i in range(d):
            if np.any(Fq[:, i]):
                J = J + sp.diags(Fq[:, i]) @ ops.grad[i]
            for j in range(d):
                ct = 0.5 * FP[:, i, j] + W[:, i, j]
                ch = 0.5 * FP[:, i, j] - W[:, i, j]
                if np.any(ct):
                    J = J + sp.diags(ct) @ ops.tilde[i, j]
                if np.any(ch):
                    J = J + sp.diags(ch) @ ops.hat[i, j]
        return sp.csr_matrix(J)

    def sparsity(self) -> sp.csr_matrix:
        """Union stencil pattern of every operator block (13 points per row in 2D)."""
        pattern = abs(self.ops.identity)
        for mats in (self.ops.hat.values(), self.ops.tilde.values(), self.ops.grad):
            for m in mats:
                pattern = pattern + abs(m)
        pattern = sp.csr_matrix(pattern)
        pattern.data[:] = 1.0
        return pattern

    def fd_jacobian(self, u: np.ndarray, frozen: Optional[LocalEvaluation] = None, step: float = 1e-7) -> sp.csr_matrix:
        """Column-coloured forward-difference Jacobian on :meth:`sparsity`."""
        grid = self.grid
        pattern = self.sparsity().tocsc()
        m = grid.multi[grid.interior_ids]
        colour = np.zeros(self.size, dtype=np.int64)
        for i in range(grid.dim):
            colour = colour * 5 + m[:, i] % 5
        base = self.residual(u, frozen)
        rows, cols, vals = [], [], []
        for c in np.unique(colour):
            group = np.flatnonzero(colour == c)
            eps = step * (1.0 + np.abs(u[group]))
            du = np.zeros_like(u)
            du[group] = eps
            delta = self.residual(u + du, frozen) - base
            for col, e in zip(group, eps):
                r = pattern.indices[pattern.indptr[col]:pattern.indptr[col + 1]]
                rows.append(r)
                cols.append(np.full(len(r), col))
                vals.append(delta[r] / e)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.size, self.size)
        )

    def linear_system(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        """``(L, b)`` with ``L u = b`` for problems affine in the unknowns."""
        zero = np.zeros(self.size)
        L, _ = self.jacobian(zero)
        return L, -self.residual(zero)


# ---------------------------------------------------------- node-level API
def eval_Fhat(U: GridFunction, params: SchemeParams, problem: ProblemDef, node: int) -> float:
    """Operator value at one node, reading neighbors (boundary, ghosts) from ``U``."""
    grid = U.grid
    bundle = hessian_bundle(U, node)
    q = np.array([diff1(U, i, "central", node) for i in range(grid.dim)])
    x = grid.coordinates([node])
    ev = local_fhat(
        problem, params, bundle.dtilde[None], bundle.dhat[None], q[None], U.values[[node]], x
    )
    return float(ev.value[0])


def assemble_residual(U: GridFunction, params: SchemeParams, problem: ProblemDef) -> Residual:
    """Residual at interior nodes with Dirichlet data and the ghost closure re-imposed."""
    system = DiscreteSystem(U.grid, problem, params)
    misfit = np.abs(U.values[U.grid.boundary_ids] - system.boundary_values)
    ev, _ = system.evaluate(U.interior())
    return Residual(ev.value, float(misfit.max()) if misfit.size else 0.0)


def assemble_jacobian(U: GridFunction, params: SchemeParams, problem: ProblemDef) -> sp.csr_matrix:
    return DiscreteSystem(U.grid, problem, params).jacobian(U.interior())[0]
