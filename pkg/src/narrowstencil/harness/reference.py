"""Published error tables of the benchmark problems.

Keys are ``(experiment, column)``; each entry lists the mesh parameters, the
mesh size used for orders and the l-infinity errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

LINEAR_MESHES = (10, 40, 80, 120, 180, 240, 300)
HJB_MESHES = (10, 16, 24, 32, 40, 50, 65)
CURVATURE_MESHES = (6, 12, 24, 48, 72, 96, 120)

HJB_H = (1.57e-1, 9.43e-2, 6.15e-2, 4.56e-2, 3.63e-2, 2.89e-2, 2.21e-2)
CURVATURE_H = (2.83e-1, 1.29e-1, 6.15e-2, 3.01e-2, 1.99e-2, 1.49e-2, 1.19e-2)
LINEAR_H = tuple(2.0 / (n + 1) for n in LINEAR_MESHES)


@dataclass(frozen=True)
class ReferenceColumn:
    experiment: str
    column: str
    meshes: Tuple[int, ...]
    h: Tuple[float, ...]
    errors: Tuple[float, ...]

    def error_at(self, mesh: int) -> Optional[float]:
        try:
            return self.errors[self.meshes.index(mesh)]
        except ValueError:
            return None


def _columns(experiment: str, meshes, h, data: Dict[str, Sequence[float]]) -> Dict[Tuple[str, str], ReferenceColumn]:
    return {(experiment, c): ReferenceColumn(experiment, c, tuple(meshes), tuple(h), tuple(e)) for c, e in data.items()}


REFERENCE: Dict[Tuple[str, str], ReferenceColumn] = {}
REFERENCE.update(_columns("linear", LINEAR_MESHES, LINEAR_H, {
    "u1": (5.77e-2, 3.86e-3, 9.79e-4, 4.40e-4, 1.96e-4, 1.11e-4, 7.10e-5),
    "u2": (5.21e-3, 8.29e-4, 3.26e-4, 1.86e-4, 1.05e-4, 7.02e-5, 5.11e-5),
}))
REFERENCE.update(_columns("hjb", HJB_MESHES, HJB_H, {
    "gamma=1000": (1.30, 1.27, 1.22, 1.15, 1.08, 9.78e-1, 8.32e-1),
    "gamma=100": (1.17, 9.83e-1, 7.51e-1, 5.67e-1, 4.34e-1, 3.19e-1, 2.12e-1),
    "gamma=10": (6.08e-1, 3.34e-1, 1.73e-1, 1.01e-1, 6.47e-2, 4.05e-2, 2.30e-2),
    "gamma=1": (1.32e-1, 5.08e-2, 2.15e-2, 1.17e-2, 7.43e-3, 4.74e-3, 2.81e-3),
    "gamma=0": (2.35e-2, 1.03e-2, 4.96e-3, 2.92e-3, 1.94e-3, 1.28e-3, 7.92e-4),
}))
REFERENCE.update(_columns("monge_ampere", CURVATURE_MESHES, CURVATURE_H, {
    "gamma=1000": (5.59e-1, 5.86e-1, 5.64e-1, 4.22e-1, 2.32e-1, 1.31e-1, 8.13e-2),
    "gamma=100": (5.49e-1, 5.14e-1, 2.22e-1, 5.07e-2, 2.18e-2, 1.22e-2, 7.95e-3),
    "gamma=10": (4.02e-1, 9.65e-2, 2.09e-2, 5.23e-3, 2.39e-3, 1.38e-3, 8.98e-4),
    "gamma=1": (4.19e-2, 9.30e-3, 2.31e-3, 5.87e-4, 2.64e-4, 1.50e-4, 9.70e-5),
    "gamma=0": (1.57e-2, 3.41e-3, 7.87e-4, 1.88e-4, 8.21e-5, 4.58e-5, 2.91e-5),
    "sigma=1000": (3.65e-2, 3.56e-2, 3.07e-2, 1.97e-2, 1.24e-2, 8.14e-3, 5.66e-3),
    "sigma=100": (3.36e-2, 2.49e-2, 1.19e-2, 3.83e-3, 1.79e-3, 1.02e-3, 6.59e-4),
    "sigma=10": (1.95e-2, 6.22e-3, 1.63e-3, 4.07e-4, 1.79e-4, 1.00e-4, 6.41e-5),
    "sigma=1": (1.47e-2, 3.05e-3, 7.00e-4, 1.67e-4, 7.31e-5, 4.08e-5, 2.60e-5),
}))
REFERENCE.update(_columns("gauss_curvature", CURVATURE_MESHES, CURVATURE_H, {
    "gamma=1000": (1.30, 1.27, 1.22, 1.15, 1.08, 9.78e-1, 8.32e-1),
    "gamma=100": (5.57e-1, 5.80e-1, 5.24e-1, 2.79e-1, 1.72e-1, 1.31e-1, 1.06e-1),
    "gamma=10": (5.33e-1, 4.05e-1, 1.67e-1, 8.64e-2, 5.76e-2, 4.24e-2, 3.29e-2),
    "gamma=1": (2.56e-1, 1.08e-1, 5.52e-2, 2.51e-2, 1.49e-2, 1.01e-2, 7.30e-3),
    "gamma=0": (2.19e-2, 3.89e-3, 8.20e-4, 1.90e-4, 8.25e-5, 4.59e-5, 2.92e-5),
    "sigma=1000": (3.68e-2, 3.70e-2, 3.59e-2, 3.19e-2, 2.73e-2, 2.31e-2, 1.96e-2),
    "sigma=100": (3.63e-2, 3.40e-2, 2.70e-2, 1.61e-2, 1.04e-2, 7.22e-3, 5.28e-3),
    "sigma=10": (3.20e-2, 2.11e-2, 1.02e-2, 3.84e-3, 1.96e-3, 1.18e-3, 7.88e-4),
    "sigma=1": (1.81e-2, 6.83e-3, 2.09e-3, 5.75e-4, 2.61e-4, 1.47e-4, 9.45e-5),
}))


def experiment_of(problem_name: str) -> str:
    return "linear" if problem_name.startswith("linear") else problem_name


def reference_column(problem_name: str, gamma: float, sigma: float) -> Optional[ReferenceColumn]:
    """Published column for a stage; ``gamma = -sigma`` stages map to the sigma columns."""
    experiment = experiment_of(problem_name)
    if experiment == "linear":
        key = "u1" if problem_name.endswith("1") else "u2"
    elif sigma > 0 and gamma == -sigma:
        key = f"sigma={sigma:g}"
    elif sigma == 0:
        key = f"gamma={gamma:g}"
    else:
        return None
    return REFERENCE.get((experiment, key))


def reference_ratios(problem_name: str, meshes: Sequence[int], stage_errors: Sequence[Dict[str, float]]) -> List[Dict[str, float]]:
    """Observed / published error per mesh and stage label ``gamma=..,sigma=..``."""
    out: List[Dict[str, float]] = []
    for mesh, errors in zip(meshes, stage_errors):
        ratios: Dict[str, float] = {}
        for label, err in errors.items():
            g, s = (float(part.split("=")[1]) for part in label.split(","))
            col = reference_column(problem_name, g, s)
            published = col.error_at(mesh) if col else None
            if published:
                ratios[label] = err / published
        out.append(ratios)
    return out
