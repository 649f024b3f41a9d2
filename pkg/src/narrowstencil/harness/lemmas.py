"""Dense-oracle batteries for the structural properties of the discrete operators.

Each battery returns a :class:`LemmaReport` listing one :class:`AuditReport`
per check; a battery never raises on a failed check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.audits import AuditReport
from ..core.fd_ops import assemble_first_central, assemble_hessian_blocks, assemble_wide_laplacian
from ..core.grid import Domain, Grid, build_grid, counts_from_interior
from ..core.problems import ProblemDef, make_constant_coefficient
from ..core.scheme import DiscreteSystem, SchemeParams

logger = logging.getLogger(__name__)

DEFAULT_SIZES = tuple(range(2, 9))
DENSE_LIMIT = 100
SYMMETRY_TOL = 1e-12
IDENTITY_TOL = 1e-12
EIG_TOL = 1e-10


@dataclass
class LemmaReport:
    name: str
    seed: int
    checks: List[AuditReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[AuditReport]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, worst: float, tolerance: float, **details: Any) -> None:
        self.checks.append(AuditReport(name, bool(passed), float(worst), tolerance, details=details))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def log(self) -> None:
        status = "passed" if self.passed else f"FAILED ({len(self.failures)} of {len(self.checks)})"
        logger.info("%s: %s", self.name, status)
        for c in self.failures:
            logger.warning("  %s", c.to_text())


def unit_grid(n: int, dim: int = 2) -> Grid:
    """Unit box with ``n`` interior nodes per axis."""
    return build_grid(Domain.box(0.0, 1.0, dim), counts_from_interior(n, dim))


def _dense(A) -> np.ndarray:
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A)


def _asymmetry(A: np.ndarray) -> float:
    scale = max(np.abs(A).max(), 1.0)
    return float(np.abs(A - A.T).max() / scale)


def _min_eig(A: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part; Cholesky success beyond the dense limit."""
    S = 0.5 * (A + A.T)
    if S.shape[0] <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(S).min())
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return -np.inf
    return np.inf


# ------------------------------------------------------ Hessian difference
def verify_hessian_lemma(sizes: Iterable[int] = DEFAULT_SIZES, seed: int = 42) -> LemmaReport:
    """``D~_ij - D^_ij`` is SPD and equals ``(h_i h_j / 2) D^_ii D^_jj``; ``-D^ > -D-bar > -D~``."""
    report = LemmaReport("hessian_lemma", seed)
    for n in sizes:
        grid = unit_grid(n)
        blocks = assemble_hessian_blocks(grid)
        h = grid.spacings
        for i in range(grid.dim):
            for j in range(i, grid.dim):
                tag = {"n": n, "block": [i, j]}
                hat, tilde = _dense(blocks[i, j, "hat"]), _dense(blocks[i, j, "tilde"])
                diff = tilde - hat
                report.add("symmetric", _asymmetry(diff) <= SYMMETRY_TOL, _asymmetry(diff), SYMMETRY_TOL, **tag)
                lam = _min_eig(diff)
                report.add("positive_definite", lam > 0, lam, 0.0, **tag)

                product = 0.5 * h[i] * h[j] * _dense(blocks[i, i, "hat"]) @ _dense(blocks[j, j, "hat"])
                scale = max(np.abs(diff).max(), 1.0)
                gap = float(np.abs(diff - product).max() / scale)
                report.add("product_identity", gap <= IDENTITY_TOL, gap, IDENTITY_TOL, **tag)

                bar = 0.5 * (hat + tilde)
                # -D^ > -D-bar and -D-bar > -D~
                for label, lower in (("hat_over_bar", bar - hat), ("bar_over_tilde", tilde - bar)):
                    lam = _min_eig(lower)
                    report.add(label, lam > 0, lam, 0.0, **tag)
    report.log()
    return report


# ------------------------------------------------------ SPD of L
def section_matrix(grid: Grid, A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``L = -sum a_ij D_i D_j + sum a_ii B_i`` and ``M``, dense."""
    M, B = assemble_wide_laplacian(grid)
    D = [_dense(assemble_first_central(grid, i)) for i in range(grid.dim)]
    L = np.zeros((grid.n_interior, grid.n_interior))
    for i in range(grid.dim):
        L += A[i, i] * _dense(B[i])
        for j in range(grid.dim):
            L -= A[i, j] * D[i] @ D[j]
    return L, _dense(M)


def default_coefficients(seed: int = 42) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(2, 2))
    return [np.eye(2), np.array([[2.0, 1.0], [1.0, 2.0]]), G @ G.T + 0.5 * np.eye(2)]


def verify_spd_L(
    coefficients: Optional[Sequence[np.ndarray]] = None,
    sizes: Iterable[int] = DEFAULT_SIZES,
    seed: int = 42,
) -> LemmaReport:
    """``L`` is symmetric, ``L >= lambda_0 M`` and ``L > 0`` for constant SPD ``A``.

    Also checks ``L`` against the Jacobian of the unweighted scheme ``-A : D-bar^2``.
    """
    report = LemmaReport("spd_L", seed)
    coefficients = default_coefficients(seed) if coefficients is None else coefficients
    for A in coefficients:
        A = np.asarray(A, dtype=float)
        lam0 = float(np.linalg.eigvalsh(A).min())
        for n in sizes:
            grid = unit_grid(n)
            L, M = section_matrix(grid, A)
            tag = {"n": n, "A": A.tolist()}
            scale = max(np.abs(L).max(), 1.0)
            report.add("symmetric", _asymmetry(L) <= SYMMETRY_TOL, _asymmetry(L), SYMMETRY_TOL, **tag)
            gap = _min_eig(L - lam0 * M) / scale
            report.add("dominates_lambda_M", gap >= -EIG_TOL, gap, EIG_TOL, **tag)
            lam = _min_eig(L)
            report.add("positive_definite", lam > 0, lam, 0.0, **tag)

            problem = make_constant_coefficient(A)
            system = DiscreteSystem(grid, problem, SchemeParams.fixed(np.zeros((2, 2))))
            J, _ = system.jacobian(np.zeros(grid.n_interior))
            mismatch = float(np.abs(_dense(J) - L).max() / scale)
            report.add("matches_scheme_jacobian", mismatch <= 1e-12, mismatch, 1e-12, **tag)
    report.log()
    return report


# ------------------------------------------------------ symmetrization
def symmetrization_norms(B: np.ndarray, F: np.ndarray, sigma: float) -> Dict[str, float]:
    """Spectral quantities of ``sigma I - F B`` and its symmetrized form ``sigma I - R B R*``.

    ``F = R* R`` with ``R`` the transposed lower Cholesky factor, so ``F B`` is
    similar to ``R B R*``.
    """
    n = B.shape[0]
    R = np.linalg.cholesky(F).T
    S = R @ B @ R.T
    eye = np.eye(n)
    return {
        "symmetrized": float(np.linalg.norm(sigma * eye - S, 2)),
        "raw": float(np.linalg.norm(sigma * eye - F @ B, 2)),
        "spectral_radius": float(np.max(np.abs(np.linalg.eigvals(sigma * eye - F @ B)))),
        "lambda_max": float(np.linalg.eigvalsh(0.5 * (S + S.T)).max()),
    }


def random_psd(rng: np.random.Generator, n: int, rank: Optional[int] = None) -> np.ndarray:
    G = rng.normal(size=(n, rank or n))
    return G @ G.T


def verify_symmetrization(
    sizes: Iterable[int] = (8,),
    trials: int = 100,
    seed: int = 42,
    epsilons: Sequence[float] = (0.01, 1.0),
) -> LemmaReport:
    """``|sigma I - R B R*|_2 <= sigma`` once ``sigma >= lambda_max(R B R*)``."""
    report = LemmaReport("symmetrization", seed)
    rng = np.random.default_rng(seed)
    for n in sizes:
        for t in range(trials):
            B = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
            F = random_psd(rng, n) + 0.1 * np.eye(n)
            lam = symmetrization_norms(B, F, 0.0)["lambda_max"]
            for eps in epsilons:
                sigma = (1.0 + eps) * lam
                norms = symmetrization_norms(B, F, sigma)
                excess = (norms["symmetrized"] - sigma) / max(sigma, 1.0)
                report.add(
                    "contractive",
                    excess <= 1e-12,
                    excess,
                    1e-12,
                    n=n,
                    trial=t,
                    epsilon=eps,
                    spectral_radius=norms["spectral_radius"] / sigma,
                    raw_ratio=norms["raw"] / sigma,
                )
    report.log()
    return report


# ------------------------------------------------------ contraction
def contraction_ratio(
    system: DiscreteSystem, rho: float, rng: np.random.Generator, sweeps: int = 50
) -> float:
    """Geometric-mean ratio ``|M^k U - M^k V| / |U - V|`` over ``sweeps`` applications."""
    u = rng.normal(size=system.size)
    v = rng.normal(size=system.size)
    start = float(np.linalg.norm(u - v))
    for _ in range(sweeps):
        u = u - rho * system.residual(u)
        v = v - rho * system.residual(v)
    return (float(np.linalg.norm(u - v)) / start) ** (1.0 / sweeps)


def verify_contraction(
    problem: Optional[ProblemDef] = None,
    rho_factors: Sequence[float] = (1e-3, 0.5, 1.0, 1.9, 3.0),
    sizes: Iterable[int] = (4, 8),
    params: Optional[SchemeParams] = None,
    seed: int = 42,
    sweeps: int = 50,
) -> LemmaReport:
    """Pseudo-time map contracts exactly when ``I - rho L`` does.

    ``rho = factor / lambda_max(L)``; a check passes when the measured ratio and
    the spectral radius of ``I - rho L`` fall on the same side of 1.
    """
    report = LemmaReport("contraction", seed)
    problem = problem or make_constant_coefficient(np.array([[2.0, 1.0], [1.0, 2.0]]))
    params = params or SchemeParams()
    rng = np.random.default_rng(seed)
    for n in sizes:
        grid = unit_grid(n)
        system = DiscreteSystem(grid, problem, params)
        L = _dense(system.jacobian(np.zeros(system.size))[0])
        lam_max = float(np.max(np.abs(np.linalg.eigvals(L))))
        for factor in rho_factors:
            rho = factor / lam_max
            radius = float(np.max(np.abs(np.linalg.eigvals(np.eye(system.size) - rho * L))))
            ratio = contraction_ratio(system, rho, rng, sweeps)
            expected = radius < 1.0
            report.add(
                "ratio_matches_spectrum",
                (ratio < 1.0) == expected,
                ratio,
                1.0,
                n=n,
                rho=rho,
                factor=factor,
                spectral_radius=radius,
                contracts=expected,
            )
    report.log()
    return report


def run_all(seed: int = 42, sizes: Iterable[int] = DEFAULT_SIZES, trials: int = 100) -> List[LemmaReport]:
    sizes = tuple(sizes)
    return [
        verify_hessian_lemma(sizes, seed),
        verify_spd_L(sizes=sizes, seed=seed),
        verify_symmetrization(trials=trials, seed=seed),
        verify_contraction(sizes=tuple(s for s in sizes if s >= 2)[-2:] or (4,), seed=seed),
    ]
