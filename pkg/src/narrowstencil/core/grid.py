"""Uniform Cartesian grids with a one-layer ghost extension.

Nodes live in a padded multi-index space: along axis ``i`` the padded index
``m`` runs over ``0 .. J_i + 1``; ``1 .. J_i`` are the real nodes (coordinate
``lo_i + (m - 1) h_i``) and ``0`` / ``J_i + 1`` hold ghost nodes. Only the ghosts
reached by the wide second difference of an interior node are kept, so the
extended node set is the real nodes plus the nodes ``y +- 2 h_i e_i`` for
interior ``y`` one layer from the boundary.

Flat ids enumerate the extended set lexicographically with axis 0 fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, List, Sequence, Tuple

import numpy as np

from .errors import InvalidGridError, StencilError


class NodeClass(Enum):
    """Classification written to grid dumps."""
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    SH = "sh"
    GHOST = "ghost"


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``(lo_1, hi_1) x ... x (lo_d, hi_d)``."""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(a) for a in self.lo)
        hi = tuple(float(b) for b in self.hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidGridError(f"domain bounds have mismatched dimensions: {lo} vs {hi}")
        bad = [i for i, (a, b) in enumerate(zip(lo, hi)) if not b > a]
        if bad:
            raise InvalidGridError(f"domain requires hi > lo on every axis, violated on axes {bad}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, lo: float, hi: float, dim: int = 2) -> Domain:
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)


class Grid:
    """Immutable uniform grid ``T_h`` with ghost layer and index maps.

    Attributes:
        domain: The box the grid covers.
        counts: Total nodes per axis ``J_i`` (boundary included).
        spacings: ``h_i = (hi_i - lo_i) / (J_i - 1)``.
        multi: ``(n_ext, d)`` padded multi-index of every extended node.
        interior_ids, boundary_ids, ghost_ids, sh_ids: flat-id arrays.
        unknown_of: flat id -> position in the interior unknown vector, or -1.
    """

    def __init__(self, domain: Domain, counts: Sequence[int]):
        counts = tuple(int(J) for J in counts)
        if len(counts) != domain.dim:
            raise InvalidGridError(
                f"expected {domain.dim} node counts, got {len(counts)}"
            )
        if any(J < 3 for J in counts):
            raise InvalidGridError(f"every axis needs at least 3 nodes, got {counts}")

        self.domain = domain
        self.counts = counts
        self.dim = domain.dim
        self.spacings = domain.lengths / (np.asarray(counts, dtype=float) - 1.0)
        self.padded_shape = tuple(J + 2 for J in counts)

        J = np.asarray(counts)
        padded = np.indices(self.padded_shape).reshape(self.dim, -1, order="F").T
        real = np.all((padded >= 1) & (padded <= J), axis=1)
        inner = (padded >= 2) & (padded <= J - 1)
        outside = (padded < 1) | (padded > J)
        ghost = (outside.sum(axis=1) == 1) & np.all(outside | inner, axis=1)
        keep = real | ghost

        self.multi = padded[keep]
        self._flat_of = np.full(self.padded_shape, -1, dtype=np.int64)
        self._flat_of[tuple(self.multi.T)] = np.arange(len(self.multi))

        interior_mask = np.all(inner[keep], axis=1)
        ghost_mask = ghost[keep]
        self.interior_ids = np.flatnonzero(interior_mask)
        self.ghost_ids = np.flatnonzero(ghost_mask)
        self.real_ids = np.flatnonzero(~ghost_mask)
        self.boundary_ids, self.sh_ids = classify_boundary(self)

        self.unknown_of = np.full(self.size, -1, dtype=np.int64)
        self.unknown_of[self.interior_ids] = np.arange(len(self.interior_ids))
        self._init_ghost_sources()

    # ------------------------------------------------------------------ sizes
    @property
    def size(self) -> int:
        """Number of extended nodes ``|T_h'|``."""
        return len(self.multi)

    @property
    def n_interior(self) -> int:
        return len(self.interior_ids)

    @property
    def interior_shape(self) -> Tuple[int, ...]:
        return tuple(J - 2 for J in self.counts)

    @property
    def h_axis(self) -> float:
        return float(np.max(self.spacings))

    @property
    def h_diag(self) -> float:
        return float(np.sqrt(np.sum(self.spacings ** 2)))

    # ----------------------------------------------------------- index maps
    def flat(self, multi_index: Sequence[int]) -> int:
        """Flat id of a padded multi-index; raises if the node is not stored."""
        m = tuple(int(a) for a in multi_index)
        if any(a < 0 or a >= n for a, n in zip(m, self.padded_shape)):
            raise StencilError(m, (0,) * self.dim)
        k = int(self._flat_of[m])
        if k < 0:
            raise StencilError(m, (0,) * self.dim)
        return k

    def multi_index(self, k: int) -> Tuple[int, ...]:
        return tuple(int(a) for a in self.multi[k])

    def neighbor(self, k: int, offset: Sequence[int]) -> int:
        """Flat id of ``node k + offset`` (offset in grid steps)."""
        m = self.multi[k] + np.asarray(offset, dtype=np.int64)
        if np.any(m < 0) or np.any(m >= self.padded_shape):
            raise StencilError(self.multi[k], offset)
        j = int(self._flat_of[tuple(m)])
        if j < 0:
            raise StencilError(self.multi[k], offset)
        return j

    def shifted_ids(self, offset: Sequence[int]) -> np.ndarray:
        """Flat ids of ``interior + offset`` in interior-unknown order.

        Returns -1 where the shifted node is not stored.
        """
        block = self._flat_of[self.interior_slices(offset)]
        return block.ravel(order="F")

    def interior_slices(self, offset: Sequence[int]) -> Tuple[slice, ...]:
        """Slices of a padded array selecting the interior block shifted by offset."""
        return tuple(
            slice(2 + o, J + o) for o, J in zip((int(a) for a in offset), self.counts)
        )

    def to_padded(self, values: np.ndarray) -> np.ndarray:
        """Scatter extended-node values into the padded array (NaN where unused)."""
        out = np.full(self.padded_shape, np.nan)
        out[tuple(self.multi.T)] = values
        return out

    # ---------------------------------------------------------- geometry
    def coordinates(self, ids: np.ndarray | None = None) -> np.ndarray:
        """``(n, d)`` node coordinates, ``lo + (m - 1) h``."""
        m = self.multi if ids is None else self.multi[np.asarray(ids)]
        return np.asarray(self.domain.lo) + (m - 1) * self.spacings

    def is_interior_multi(self, m: np.ndarray) -> np.ndarray:
        J = np.asarray(self.counts)
        return np.all((m >= 2) & (m <= J - 1), axis=-1)

    def interior_depth(self) -> np.ndarray:
        """Layer index of every interior unknown; 1 means adjacent to the boundary."""
        m = self.multi[self.interior_ids]
        J = np.asarray(self.counts)
        return np.min(np.minimum(m - 1, J - m), axis=1)

    def _init_ghost_sources(self) -> None:
        # ghost -> (interior node y two steps inside, S_h node b one step inside, axis)
        J = np.asarray(self.counts)
        g = self.multi[self.ghost_ids]
        low = g == 0
        high = g == J + 1
        axis = np.argmax(low | high, axis=1)
        step = np.where(low[np.arange(len(g)), axis], 1, -1)
        unit = np.zeros_like(g)
        unit[np.arange(len(g)), axis] = step
        self.ghost_axis = axis
        self.ghost_sh = self._flat_of[tuple((g + unit).T)]
        self.ghost_source = self._flat_of[tuple((g + 2 * unit).T)]

    # -------------------------------------------------------------- dumps
    def node_class(self, k: int) -> NodeClass:
        return node_classes(self)[k]

    def iter_nodes(self) -> Iterator[Tuple[int, NodeClass, np.ndarray]]:
        classes = node_classes(self)
        coords = self.coordinates()
        for k in range(self.size):
            yield k, classes[k], coords[k]

    def __repr__(self) -> str:
        return (
            f"Grid(counts={self.counts}, spacings={tuple(np.round(self.spacings, 6))}, "
            f"interior={self.n_interior}, ghosts={len(self.ghost_ids)})"
        )


def node_classes(grid: Grid) -> List[NodeClass]:
    classes = [NodeClass.BOUNDARY] * grid.size
    for k in grid.interior_ids:
        classes[k] = NodeClass.INTERIOR
    for k in grid.ghost_ids:
        classes[k] = NodeClass.GHOST
    for k in grid.sh_ids:
        classes[k] = NodeClass.SH
    return classes


def classify_boundary(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """Boundary node ids and the subset ``S_h`` with an interior axis neighbor."""
    J = np.asarray(grid.counts)
    m = grid.multi
    real = np.all((m >= 1) & (m <= J), axis=1)
    boundary = real & ~grid.is_interior_multi(m)
    boundary_ids = np.flatnonzero(boundary)

    mb = m[boundary_ids]
    has_interior_neighbor = np.zeros(len(mb), dtype=bool)
    for i in range(grid.dim):
        for s in (-1, 1):
            shifted = mb.copy()
            shifted[:, i] += s
            has_interior_neighbor |= grid.is_interior_multi(shifted)
    return boundary_ids, boundary_ids[has_interior_neighbor]


def build_grid(domain: Domain, counts: Sequence[int]) -> Grid:
    return Grid(domain, counts)


def counts_from_interior(interior: int, dim: int = 2) -> Tuple[int, ...]:
    """Total node counts for ``interior`` unknowns per axis."""
    return (int(interior) + 2,) * dim


@dataclass
class GridFunction:
    """Real value per extended node."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"grid function needs {self.grid.size} values, got shape {self.values.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> GridFunction:
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def sample(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
        """Evaluate ``func`` (vectorized over ``(n, d)`` points) at every extended node."""
        return cls(grid, np.asarray(func(grid.coordinates()), dtype=float))

    def interior(self) -> np.ndarray:
        return self.values[self.grid.interior_ids]

    def padded(self) -> np.ndarray:
        return self.grid.to_padded(self.values)

    def copy(self) -> GridFunction:
        return GridFunction(self.grid, self.values.copy())

    def __add__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values - other.values)
