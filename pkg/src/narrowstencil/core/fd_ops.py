"""Finite-difference operators on extended grid functions.

Stencils are dictionaries ``{offset: coefficient}`` with offsets in grid steps.
The same stencil drives three consumers: point-wise evaluation at a single
node, vectorized evaluation over all interior nodes, and sparse assembly over
the interior unknowns with Dirichlet data and ghost values eliminated.

Ghost values are never unknowns. For an S_h node ``b`` with interior neighbor
``y = b + h_i e_i`` the auxiliary condition ``Delta_h U(b) = eta(b)`` gives

    U(b - h_i e_i) = 2 g(b) - U(y) + h_i^2 (eta(b) - sum_{j != i} delta^2_{x_j} g(b))

so every ghost is an affine function of one interior value and boundary data.
The ``normal`` auxiliary mode drops the tangential sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import StencilError
from .grid import Grid, GridFunction

Offset = Tuple[int, ...]
Stencil = Dict[Offset, float]
SparseOperator = sp.csr_matrix

AUX_MODES = ("laplacian", "normal")


# --------------------------------------------------------------------- stencils
def _unit(dim: int, axis: int, step: int = 1) -> Offset:
    e = [0] * dim
    e[axis] = step
    return tuple(e)


def _plus(a: Offset, b: Offset) -> Offset:
    return tuple(x + y for x, y in zip(a, b))


def _combine(*terms: Tuple[float, Stencil]) -> Stencil:
    out: Stencil = {}
    for weight, stencil in terms:
        for off, c in stencil.items():
            out[off] = out.get(off, 0.0) + weight * c
    return {off: c for off, c in out.items() if c != 0.0}


def first_stencil(spacings: Sequence[float], axis: int, mode: str) -> Stencil:
    """delta^+, delta^- or their average along ``axis``."""
    dim, h = len(spacings), float(spacings[axis])
    zero, e = (0,) * dim, _unit(dim, axis)
    if mode == "+":
        return {e: 1.0 / h, zero: -1.0 / h}
    if mode == "-":
        return {zero: 1.0 / h, _unit(dim, axis, -1): -1.0 / h}
    if mode == "central":
        return {e: 0.5 / h, _unit(dim, axis, -1): -0.5 / h}
    raise ValueError(f"unknown difference mode {mode!r}")


def one_sided_stencil(spacings: Sequence[float], i: int, j: int, mu: int, nu: int) -> Stencil:
    """``delta^mu_{x_i} delta^nu_{x_j}`` with ``mu, nu`` in ``{+1, -1}``."""
    dim = len(spacings)
    scale = mu * nu / (float(spacings[i]) * float(spacings[j]))
    ei, ej = _unit(dim, i, mu), _unit(dim, j, nu)
    return _combine(
        (scale, {_plus(ei, ej): 1.0}),
        (-scale, {ei: 1.0}),
        (-scale, {ej: 1.0}),
        (scale, {(0,) * dim: 1.0}),
    )


def hessian_stencil(spacings: Sequence[float], i: int, j: int, kind: str) -> Stencil:
    """Entry ``(i, j)`` of the hat, tilde or bar Hessian, or of a one-sided one.

    ``kind`` is one of ``hat``, ``tilde``, ``bar``, ``++``, ``+-``, ``-+``, ``--``.
    """
    if kind in ("++", "+-", "-+", "--"):
        mu, nu = (1 if c == "+" else -1 for c in kind)
        return one_sided_stencil(spacings, i, j, mu, nu)
    if kind == "hat":
        return _combine(
            (0.5, one_sided_stencil(spacings, i, j, 1, -1)),
            (0.5, one_sided_stencil(spacings, i, j, -1, 1)),
        )
    if kind == "tilde":
        return _combine(
            (0.5, one_sided_stencil(spacings, i, j, 1, 1)),
            (0.5, one_sided_stencil(spacings, i, j, -1, -1)),
        )
    if kind == "bar":
        return _combine(
            (0.5, hessian_stencil(spacings, i, j, "hat")),
            (0.5, hessian_stencil(spacings, i, j, "tilde")),
        )
    raise ValueError(f"unknown Hessian kind {kind!r}")


def laplacian_stencil(spacings: Sequence[float], wide: bool = False) -> Stencil:
    kind = "bar" if wide else "hat"
    return _combine(*((1.0, hessian_stencil(spacings, i, i, kind)) for i in range(len(spacings))))


# ----------------------------------------------------------- point operators
def _apply_at(U: GridFunction, stencil: Stencil, node: int) -> float:
    grid = U.grid
    return float(sum(c * U.values[grid.neighbor(node, off)] for off, c in stencil.items()))


def diff1(U: GridFunction, axis: int, mode: str, node: int) -> float:
    """First difference of ``U`` at ``node`` (mode ``+``, ``-`` or ``central``)."""
    return _apply_at(U, first_stencil(U.grid.spacings, axis, mode), node)


@dataclass
class HessianBundle:
    """The four one-sided Hessians at a node and their averages."""
    dpp: np.ndarray
    dpm: np.ndarray
    dmp: np.ndarray
    dmm: np.ndarray

    @property
    def dhat(self) -> np.ndarray:
        return 0.5 * (self.dpm + self.dmp)

    @property
    def dtilde(self) -> np.ndarray:
        return 0.5 * (self.dpp + self.dmm)

    @property
    def dbar(self) -> np.ndarray:
        return 0.5 * (self.dhat + self.dtilde)


def hessian_bundle(U: GridFunction, node: int) -> HessianBundle:
    spacings = U.grid.spacings
    d = U.grid.dim
    mats = {}
    for kind in ("++", "+-", "-+", "--"):
        m = np.empty((d, d))
        for i in range(d):
            for j in range(d):
                m[i, j] = _apply_at(U, hessian_stencil(spacings, i, j, kind), node)
        mats[kind] = m
    return HessianBundle(mats["++"], mats["+-"], mats["-+"], mats["--"])


def moment(U: GridFunction, A: np.ndarray, node: int) -> float:
    """Numerical moment ``A : (D~^2 U - D^^2 U)`` at ``node``."""
    bundle = hessian_bundle(U, node)
    return float(np.sum(np.asarray(A) * (bundle.dtilde - bundle.dhat)))


def discrete_laplacians(U: GridFunction, node: int) -> Tuple[float, float]:
    """``(Delta_h U, Delta_2h U)`` at ``node``."""
    spacings = U.grid.spacings
    return (
        _apply_at(U, laplacian_stencil(spacings), node),
        _apply_at(U, laplacian_stencil(spacings, wide=True), node),
    )


# ------------------------------------------------------- vectorized operators
def apply_stencil(U: GridFunction, stencil: Stencil, padded: Optional[np.ndarray] = None) -> np.ndarray:
    """Evaluate ``stencil`` at every interior node (interior-unknown order)."""
    grid = U.grid
    if padded is None:
        padded = U.padded()
    out = np.zeros(grid.n_interior)
    for off, c in stencil.items():
        out += c * padded[grid.interior_slices(off)].ravel(order="F")
    return out


@dataclass
class NodeFields:
    """Interior-node discrete derivatives feeding the scheme."""
    value: np.ndarray
    grad: np.ndarray
    dhat: np.ndarray
    dtilde: np.ndarray

    @property
    def dbar(self) -> np.ndarray:
        return 0.5 * (self.dhat + self.dtilde)

    @property
    def moment_diff(self) -> np.ndarray:
        return self.dtilde - self.dhat


def interior_fields(U: GridFunction) -> NodeFields:
    grid = U.grid
    d, n = grid.dim, grid.n_interior
    padded = U.padded()
    grad = np.empty((n, d))
    dhat = np.empty((n, d, d))
    dtilde = np.empty((n, d, d))
    for i in range(d):
        grad[:, i] = apply_stencil(U, first_stencil(grid.spacings, i, "central"), padded)
        for j in range(i, d):
            dhat[:, i, j] = apply_stencil(U, hessian_stencil(grid.spacings, i, j, "hat"), padded)
            dtilde[:, i, j] = apply_stencil(U, hessian_stencil(grid.spacings, i, j, "tilde"), padded)
            dhat[:, j, i] = dhat[:, i, j]
            dtilde[:, j, i] = dtilde[:, i, j]
    return NodeFields(U.interior(), grad, dhat, dtilde)


# ---------------------------------------------------------- ghost elimination
@dataclass(frozen=True)
class AuxiliaryCondition:
    """Closure on S_h: ``Delta_h U = eta`` (laplacian) or ``delta^2_normal U = eta``."""
    mode: str = "laplacian"
    eta: Union[float, np.ndarray, None] = None

    def __post_init__(self) -> None:
        if self.mode not in AUX_MODES:
            raise ValueError(f"auxiliary mode must be one of {AUX_MODES}, got {self.mode!r}")

    def eta_at(self, grid: Grid, sh_nodes: np.ndarray) -> np.ndarray:
        if self.eta is None:
            return np.zeros(len(sh_nodes))
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 0:
            return np.full(len(sh_nodes), float(eta))
        if eta.shape != (len(grid.sh_ids),):
            raise ValueError(f"auxiliary table needs {len(grid.sh_ids)} entries, got {eta.shape}")
        return eta[np.searchsorted(grid.sh_ids, sh_nodes)]


DEFAULT_AUX = AuxiliaryCondition()


def fill_ghosts(grid: Grid, values: np.ndarray, aux: AuxiliaryCondition = DEFAULT_AUX) -> np.ndarray:
    """Overwrite ghost entries of ``values`` from interior and boundary entries."""
    b = grid.ghost_sh
    axis = grid.ghost_axis
    h2 = grid.spacings[axis] ** 2
    ghost = 2.0 * values[b] - values[grid.ghost_source] + h2 * aux.eta_at(grid, b)
    if aux.mode == "laplacian":
        for i in range(grid.dim):
            for j in range(grid.dim):
                if i == j:
                    continue
                rows = np.flatnonzero(axis == i)
                if rows.size == 0:
                    continue
                bj = b[rows]
                up = np.array([grid.neighbor(k, _unit(grid.dim, j, 1)) for k in bj])
                dn = np.array([grid.neighbor(k, _unit(grid.dim, j, -1)) for k in bj])
                tangential = (values[up] - 2.0 * values[bj] + values[dn]) / grid.spacings[j] ** 2
                ghost[rows] -= h2[rows] * tangential
    values[grid.ghost_ids] = ghost
    return values


def extend(
    grid: Grid,
    interior: np.ndarray,
    boundary: Union[np.ndarray, float] = 0.0,
    aux: AuxiliaryCondition = DEFAULT_AUX,
) -> GridFunction:
    """Grid function from interior unknowns, boundary data and the ghost closure.

    ``boundary`` is either a scalar or one value per ``grid.boundary_ids`` entry.
    """
    values = np.zeros(grid.size)
    values[grid.interior_ids] = interior
    values[grid.boundary_ids] = boundary
    return GridFunction(grid, fill_ghosts(grid, values, aux))


def extension_matrix(grid: Grid) -> sp.csr_matrix:
    """Linear part ``X`` of :func:`extend`: extended values from interior unknowns."""
    n = grid.n_interior
    rows = np.concatenate([grid.interior_ids, grid.ghost_ids])
    cols = np.concatenate([np.arange(n), grid.unknown_of[grid.ghost_source]])
    vals = np.concatenate([np.ones(n), -np.ones(len(grid.ghost_ids))])
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, n))


# ------------------------------------------------------------------ assembly
def stencil_matrix(grid: Grid, stencil: Stencil) -> sp.csr_matrix:
    """Rows = interior unknowns, columns = extended nodes."""
    n = grid.n_interior
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for off, c in stencil.items():
        ids = grid.shifted_ids(off)
        if np.any(ids < 0):
            bad = int(np.flatnonzero(ids < 0)[0])
            raise StencilError(grid.multi[grid.interior_ids[bad]], off)
        rows.append(np.arange(n))
        cols.append(ids)
        vals.append(np.full(n, c))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, grid.size),
    ).tocsr()


class OperatorSet:
    """Eliminated interior operators of a grid (homogeneous boundary data)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.extension = extension_matrix(grid)
        d = grid.dim
        self.hat: Dict[Tuple[int, int], sp.csr_matrix] = {}
        self.tilde: Dict[Tuple[int, int], sp.csr_matrix] = {}
        for i in range(d):
            for j in range(i, d):
                self.hat[i, j] = self.hat[j, i] = self.eliminate(hessian_stencil(grid.spacings, i, j, "hat"))
                self.tilde[i, j] = self.tilde[j, i] = self.eliminate(hessian_stencil(grid.spacings, i, j, "tilde"))
        self.grad = [self.eliminate(first_stencil(grid.spacings, i, "central")) for i in range(d)]
        self.identity = sp.identity(grid.n_interior, format="csr")

    def eliminate(self, stencil: Stencil) -> sp.csr_matrix:
        return (stencil_matrix(self.grid, stencil) @ self.extension).tocsr()

    def bar(self, i: int, j: int) -> sp.csr_matrix:
        return (0.5 * (self.hat[i, j] + self.tilde[i, j])).tocsr()


@lru_cache(maxsize=16)
def operator_set(grid: Grid) -> OperatorSet:
    return OperatorSet(grid)


def assemble_first_central(grid: Grid, axis: int) -> SparseOperator:
    """``D_i``: central first difference with zero Dirichlet data eliminated."""
    return operator_set(grid).grad[axis]


def assemble_wide_laplacian(grid: Grid) -> Tuple[SparseOperator, List[SparseOperator]]:
    """``M = -Delta_2h`` (auxiliary condition folded in) and diagonal ``B_i``.

    ``M + sum_i D_i D_i = sum_i B_i`` with ``B_i`` supported on the first layer.
    """
    ops = operator_set(grid)
    parts = [-ops.bar(i, i) for i in range(grid.dim)]
    M = sp.csr_matrix(sum(parts[1:], parts[0]))
    B = []
    for i, Mi in enumerate(parts):
        Di = ops.grad[i]
        B.append(sp.diags((Mi + Di @ Di).diagonal(), format="csr"))
    return M, B


def assemble_hessian_blocks(grid: Grid) -> Dict[Tuple[int, int, str], SparseOperator]:
    ops = operator_set(grid)
    blocks: Dict[Tuple[int, int, str], SparseOperator] = {}
    for (i, j), mat in ops.hat.items():
        blocks[i, j, "hat"] = mat
        blocks[i, j, "tilde"] = ops.tilde[i, j]
    return blocks
