"""Benchmark problems ``F(D^2 u, grad u, u, x) = 0`` with manufactured data.

Every callable is vectorized over a batch of ``n`` states:
``P`` is ``(n, d, d)``, ``q`` is ``(n, d)``, ``v`` is ``(n,)`` and ``x`` is ``(n, d)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import InvalidProblemError
from .grid import Domain

logger = logging.getLogger(__name__)

Jet = Tuple[np.ndarray, np.ndarray, np.ndarray]
StateFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

PI2 = np.pi ** 2


@dataclass(frozen=True)
class ControlSet:
    """Tensor sample of HJB controls ``theta = (phi, R)``."""
    phi_count: int = 16
    rot_count: int = 32
    phi_max: float = np.pi / 3
    rot_max: float = np.pi

    def __post_init__(self) -> None:
        if self.phi_count < 1 or self.rot_count < 1:
            raise InvalidProblemError(
                f"control sample must be nonempty, got {self.phi_count} x {self.rot_count}"
            )

    def samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(phi, angle)`` per control, phi index major (lexicographic order)."""
        phi = np.linspace(0.0, self.phi_max, self.phi_count) if self.phi_count > 1 else np.zeros(1)
        angle = np.arange(self.rot_count) * (self.rot_max / self.rot_count)
        pp, aa = np.meshgrid(phi, angle, indexing="ij")
        return pp.ravel(), aa.ravel()

    def refined(self, factor: int = 2) -> ControlSet:
        return ControlSet(
            (self.phi_count - 1) * factor + 1, self.rot_count * factor, self.phi_max, self.rot_max
        )


@dataclass
class ControlFamily:
    """Per-control linear operators ``-A^k : P + c v - f_k(x)``.

    ``offsets[k]`` is the control-dependent part of ``-f_k``; the
    control-independent source is the problem's ``source``.
    """
    diffusion: np.ndarray
    reaction: float
    offsets: np.ndarray
    labels: np.ndarray
    phi: np.ndarray
    angle: np.ndarray

    @property
    def size(self) -> int:
        return len(self.offsets)

    def values(self, P: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``(n, K)`` objective without the control-independent source."""
        return (
            -np.einsum("kij,nij->nk", self.diffusion, P)
            + self.reaction * v[:, None]
            + self.offsets[None, :]
        )


def hjb_diffusion(phi: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """``A = 1/2 sigma sigma^T`` with ``sigma = R^T [[1, sin phi], [0, cos phi]]``."""
    c, s = np.cos(angle), np.sin(angle)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    base = np.zeros((len(phi), 2, 2))
    base[:, 0, 0] = 1.0
    base[:, 0, 1] = np.sin(phi)
    base[:, 1, 1] = np.cos(phi)
    sigma = np.einsum("kji,kjl->kil", R, base)
    return 0.5 * np.einsum("kij,klj->kil", sigma, sigma)


def build_control_family(controls: ControlSet) -> ControlFamily:
    phi, angle = controls.samples()
    labels = np.stack(
        np.meshgrid(np.arange(controls.phi_count), np.arange(controls.rot_count), indexing="ij"), -1
    ).reshape(-1, 2)
    return ControlFamily(
        diffusion=hjb_diffusion(phi, angle),
        reaction=PI2,
        offsets=-np.sqrt(3.0) * np.sin(phi / PI2) ** 2,
        labels=labels,
        phi=phi,
        angle=angle,
    )


@dataclass
class ProblemDef:
    """A fully nonlinear problem with partials, data and optional exact solution."""
    name: str
    dim: int
    domain: Domain
    eval_F: StateFn
    boundary_g: Callable[[np.ndarray], np.ndarray]
    dF_dP: Optional[StateFn] = None
    dF_dq: Optional[StateFn] = None
    dF_dv: Optional[StateFn] = None
    exact_u: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_jet: Optional[Callable[[np.ndarray], Jet]] = None
    linear: bool = False
    ellipticity: float = 1.0
    controls: Optional[ControlFamily] = None
    source: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mesh_convention: str = "sides"
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def has_partials(self) -> bool:
        return None not in (self.dF_dP, self.dF_dq, self.dF_dv)

    def evaluate_point(self, P, q, v, x) -> float:
        """Scalar convenience wrapper around :attr:`eval_F`."""
        return float(self.eval_F(
            np.asarray(P, float)[None], np.asarray(q, float)[None],
            np.atleast_1d(float(v)), np.asarray(x, float)[None],
        )[0])

    def __repr__(self) -> str:
        return f"ProblemDef({self.name!r}, dim={self.dim}, linear={self.linear})"


# --------------------------------------------------------------- helpers
def _det2(P: np.ndarray) -> np.ndarray:
    return P[:, 0, 0] * P[:, 1, 1] - P[:, 0, 1] * P[:, 1, 0]


def _cofactor_derivative(P: np.ndarray) -> np.ndarray:
    """``d det(P) / dP`` entrywise for 2 x 2 matrices."""
    out = np.empty_like(P)
    out[:, 0, 0] = P[:, 1, 1]
    out[:, 1, 1] = P[:, 0, 0]
    out[:, 0, 1] = -P[:, 1, 0]
    out[:, 1, 0] = -P[:, 0, 1]
    return out


def _hess(uxx: np.ndarray, uxy: np.ndarray, uyy: np.ndarray) -> np.ndarray:
    H = np.empty((len(uxx), 2, 2))
    H[:, 0, 0] = uxx
    H[:, 0, 1] = H[:, 1, 0] = uxy
    H[:, 1, 1] = uyy
    return H


def _zeros_q(P, q, v, x):
    return np.zeros_like(q)


def _zeros_v(P, q, v, x):
    return np.zeros_like(v)


def _from_jet(jet: Callable[[np.ndarray], Jet]) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: jet(np.atleast_2d(x))[0]


# -------------------------------------------------- exact solutions (jets)
def jet_smooth_wave(x: np.ndarray) -> Jet:
    """``sin(pi (x + y)^2 / 2)``."""
    s = x[:, 0] + x[:, 1]
    arg = 0.5 * np.pi * s ** 2
    u = np.sin(arg)
    du = np.pi * s * np.cos(arg)
    d2 = np.pi * np.cos(arg) - (np.pi * s) ** 2 * np.sin(arg)
    return u, np.stack([du, du], -1), _hess(d2, d2, d2)


def jet_low_regularity(x: np.ndarray) -> Jet:
    """``x^3 (3 log x^2 - 11) / 18 + |y - 1/2|^(8/3) |x + 1/5|^(5/2)``, C^2 but not C^3."""
    X, Y = x[:, 0], x[:, 1]
    ax = np.abs(X)
    logx = np.log(np.where(ax > 0, ax, 1.0))
    nonzero = ax > 0
    t1 = np.where(nonzero, X ** 3 * (6.0 * logx - 11.0) / 18.0, 0.0)
    t1_x = np.where(nonzero, X ** 2 * (logx - 1.5), 0.0)
    t1_xx = np.where(nonzero, 2.0 * X * (logx - 1.0), 0.0)

    dy, dx = Y - 0.5, X + 0.2
    ay, axs = np.abs(dy), np.abs(dx)
    yy, yy_1, yy_2 = ay ** (8 / 3), (8 / 3) * np.sign(dy) * ay ** (5 / 3), (40 / 9) * ay ** (2 / 3)
    xx, xx_1, xx_2 = axs ** 2.5, 2.5 * np.sign(dx) * axs ** 1.5, 3.75 * axs ** 0.5

    u = t1 + yy * xx
    grad = np.stack([t1_x + yy * xx_1, yy_1 * xx], -1)
    return u, grad, _hess(t1_xx + yy * xx_2, yy_1 * xx_1, yy_2 * xx)


def jet_hjb(x: np.ndarray) -> Jet:
    """``e^{xy} sin(pi x) sin(pi y)``."""
    X, Y = x[:, 0], x[:, 1]
    E = np.exp(X * Y)
    sx, cx, sy, cy = np.sin(np.pi * X), np.cos(np.pi * X), np.sin(np.pi * Y), np.cos(np.pi * Y)
    S = sx * sy
    u = E * S
    ux = E * (Y * S + np.pi * cx * sy)
    uy = E * (X * S + np.pi * sx * cy)
    uxx = E * (Y ** 2 * S + 2 * np.pi * Y * cx * sy - PI2 * S)
    uyy = E * (X ** 2 * S + 2 * np.pi * X * sx * cy - PI2 * S)
    uxy = E * ((1 + X * Y) * S + np.pi * (X * cx * sy + Y * sx * cy) + PI2 * cx * cy)
    return u, np.stack([ux, uy], -1), _hess(uxx, uxy, uyy)


def jet_gaussian_bowl(x: np.ndarray) -> Jet:
    """``e^{(x^2 + y^2) / 2}``."""
    X, Y = x[:, 0], x[:, 1]
    u = np.exp(0.5 * (X ** 2 + Y ** 2))
    return u, np.stack([X * u, Y * u], -1), _hess((1 + X ** 2) * u, X * Y * u, (1 + Y ** 2) * u)


def jet_sine_bump(x: np.ndarray) -> Jet:
    """``sin(pi x) sin(pi y) + x y``."""
    X, Y = x[:, 0], x[:, 1]
    sx, cx, sy, cy = np.sin(np.pi * X), np.cos(np.pi * X), np.sin(np.pi * Y), np.cos(np.pi * Y)
    u = sx * sy + X * Y
    grad = np.stack([np.pi * cx * sy + Y, np.pi * sx * cy + X], -1)
    return u, grad, _hess(-PI2 * sx * sy, PI2 * cx * cy + 1.0, -PI2 * sx * sy)


# ------------------------------------------------------ linear problems
def _linear_problem(
    name: str,
    coefficient: Callable[[np.ndarray], np.ndarray],
    jet: Callable[[np.ndarray], Jet],
    domain: Domain,
    ellipticity: float,
    mesh_convention: str,
    metadata: Dict[str, str],
) -> ProblemDef:
    def source(x):
        return -np.einsum("nij,nij->n", coefficient(x), jet(x)[2])

    def eval_F(P, q, v, x):
        return -np.einsum("nij,nij->n", coefficient(x), P) - source(x)

    def dF_dP(P, q, v, x):
        return -coefficient(x)

    return ProblemDef(
        name=name,
        dim=2,
        domain=domain,
        eval_F=eval_F,
        boundary_g=_from_jet(jet),
        dF_dP=dF_dP,
        dF_dq=_zeros_q,
        dF_dv=_zeros_v,
        exact_u=_from_jet(jet),
        exact_jet=jet,
        linear=True,
        ellipticity=ellipticity,
        source=source,
        mesh_convention=mesh_convention,
        metadata=metadata,
    )


NONALIGNED_H = 2.0 / 301.0


def nonaligned_frames(h: float = NONALIGNED_H) -> np.ndarray:
    """The four orthogonal frames ``Q_k = [q1, q2]``, shape ``(4, 2, 2)``."""
    directions = np.array([[1.0, h / 2], [h, 5 * h], [10 * h, h], [h / 2, 2.0]])
    q1 = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    q2 = np.stack([-q1[:, 1], q1[:, 0]], -1)
    return np.stack([q1, q2], -1)


def nonaligned_coefficient(x: np.ndarray) -> np.ndarray:
    """Discontinuous SPD field ``Q Lambda Q^T`` selected by quadrant."""
    X, Y = x[:, 0], x[:, 1]
    lam = np.zeros((len(X), 2, 2))
    lam[:, 0, 0] = 2.0 - np.sin(np.exp(5 * X)) * np.cos(np.exp(-3 * Y))
    lam[:, 1, 1] = 2.0 - np.sign(np.cos(6 * np.pi * X) * np.sin(6 * np.pi * Y))
    quadrant = np.select(
        [(X >= 0) & (Y >= 0), (X < 0) & (Y >= 0), (X < 0) & (Y < 0)], [0, 1, 2], default=3
    )
    Q = nonaligned_frames()[quadrant]
    return np.einsum("nij,njk,nlk->nil", Q, lam, Q)


def make_linear_nonaligned(solution: int = 1) -> ProblemDef:
    """``-A : D^2 u - f`` with a coefficient no monotone stencil can follow."""
    if solution not in (1, 2):
        raise InvalidProblemError(f"linear test solution must be 1 or 2, got {solution}")
    jet = jet_smooth_wave if solution == 1 else jet_low_regularity
    return _linear_problem(
        f"linear{solution}",
        nonaligned_coefficient,
        jet,
        Domain.box(-1.0, 1.0),
        ellipticity=1.0,
        mesh_convention="interior",
        metadata={"lambda": "1", "Lambda": "4", "h_measure": "h_axis"},
    )


def make_constant_coefficient(
    A: Optional[np.ndarray] = None,
    jet: Callable[[np.ndarray], Jet] = jet_sine_bump,
    domain: Optional[Domain] = None,
) -> ProblemDef:
    """``-A : D^2 u = f`` with constant SPD ``A`` (Poisson for ``A = I``)."""
    A = np.eye(2) if A is None else np.asarray(A, dtype=float)
    return _linear_problem(
        "poisson" if np.allclose(A, np.eye(2)) else "constant_coefficient",
        lambda x: np.broadcast_to(A, (len(x), 2, 2)),
        jet,
        domain or Domain.box(0.0, 1.0),
        ellipticity=float(np.linalg.eigvalsh(A).min()),
        mesh_convention="sides",
        metadata={"lambda": f"{np.linalg.eigvalsh(A).min():.6g}"},
    )


# ------------------------------------------------------------------ HJB
def make_hjb(controls: Optional[ControlSet] = None) -> ProblemDef:
    """``inf_theta (-A^theta : D^2 u + pi^2 u - f_theta)`` over a sampled control set."""
    controls = controls or ControlSet()
    family = build_control_family(controls)

    def source(x):
        u, _, H = jet_hjb(x)
        inner = family.values(H, np.zeros(len(x))).min(axis=1)
        return PI2 * u + inner

    def eval_F(P, q, v, x):
        return family.values(P, v).min(axis=1) - source(x)

    def dF_dP(P, q, v, x):
        return -family.diffusion[np.argmin(family.values(P, v), axis=1)]

    def dF_dv(P, q, v, x):
        return np.full_like(v, family.reaction)

    ellipticity = float(np.linalg.eigvalsh(family.diffusion).min())
    logger.debug("hjb problem with %d controls, min eigenvalue %.3e", family.size, ellipticity)
    return ProblemDef(
        name="hjb",
        dim=2,
        domain=Domain.box(0.0, 1.0),
        eval_F=eval_F,
        boundary_g=_from_jet(jet_hjb),
        dF_dP=dF_dP,
        dF_dq=_zeros_q,
        dF_dv=dF_dv,
        exact_u=_from_jet(jet_hjb),
        exact_jet=jet_hjb,
        ellipticity=ellipticity,
        controls=family,
        source=source,
        metadata={"controls": f"{controls.phi_count}x{controls.rot_count}", "h_measure": "h_diag"},
    )


# ----------------------------------------------------- Monge-Ampere family
def make_monge_ampere() -> ProblemDef:
    """``-det(D^2 u) + f`` with convex solution ``e^{(x^2 + y^2) / 2}``."""

    def source(x):
        r2 = np.sum(x ** 2, axis=1)
        return np.exp(r2) * (1.0 + r2)

    def eval_F(P, q, v, x):
        return -_det2(P) + source(x)

    def dF_dP(P, q, v, x):
        return -_cofactor_derivative(P)

    return ProblemDef(
        name="monge_ampere",
        dim=2,
        domain=Domain.box(0.0, 1.0),
        eval_F=eval_F,
        boundary_g=_from_jet(jet_gaussian_bowl),
        dF_dP=dF_dP,
        dF_dq=_zeros_q,
        dF_dv=_zeros_v,
        exact_u=_from_jet(jet_gaussian_bowl),
        exact_jet=jet_gaussian_bowl,
        source=source,
        metadata={"ellipticity": "conditional on convexity", "h_measure": "h_diag"},
    )


GAUSS_K = 0.1


def make_gauss_curvature(K: float = GAUSS_K) -> ProblemDef:
    """``-det(D^2 u) / (1 + |grad u|^2)^2 + K f`` (prescribed Gauss curvature, d = 2)."""

    def source(x):
        u, grad, H = jet_gaussian_bowl(x)
        return _det2(H) / (K * (1.0 + np.sum(grad ** 2, axis=1)) ** 2)

    def eval_F(P, q, v, x):
        return -_det2(P) / (1.0 + np.sum(q ** 2, axis=1)) ** 2 + K * source(x)

    def dF_dP(P, q, v, x):
        w = (1.0 + np.sum(q ** 2, axis=1)) ** 2
        return -_cofactor_derivative(P) / w[:, None, None]

    def dF_dq(P, q, v, x):
        w = 1.0 + np.sum(q ** 2, axis=1)
        return 4.0 * q * (_det2(P) / w ** 3)[:, None]

    return ProblemDef(
        name="gauss_curvature",
        dim=2,
        domain=Domain.box(0.0, 1.0),
        eval_F=eval_F,
        boundary_g=_from_jet(jet_gaussian_bowl),
        dF_dP=dF_dP,
        dF_dq=dF_dq,
        dF_dv=_zeros_v,
        exact_u=_from_jet(jet_gaussian_bowl),
        exact_jet=jet_gaussian_bowl,
        source=source,
        metadata={"K": str(K), "h_measure": "h_diag"},
    )


PROBLEM_NAMES = ("linear1", "linear2", "hjb", "monge_ampere", "gauss_curvature", "poisson")


def get_problem(name: str, controls: Optional[ControlSet] = None) -> ProblemDef:
    """Problem by CLI name."""
    if name == "linear1":
        return make_linear_nonaligned(1)
    if name == "linear2":
        return make_linear_nonaligned(2)
    if name == "hjb":
        return make_hjb(controls)
    if name == "monge_ampere":
        return make_monge_ampere()
    if name == "gauss_curvature":
        return make_gauss_curvature()
    if name == "poisson":
        return make_constant_coefficient()
    raise InvalidProblemError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEM_NAMES)}")


# ------------------------------------------------------------------ audits
@dataclass
class PartialsReport:
    """Outcome of :func:`audit_partials`."""
    problem: str
    samples: int
    max_relative_error: Dict[str, float]
    skipped_switches: int
    ellipticity_violations: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return (
            all(e <= self.tolerance for e in self.max_relative_error.values())
            and self.ellipticity_violations == 0
        )


def random_states(
    problem: ProblemDef, n: int, rng: np.random.Generator, convex: bool = False
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Random ``(P, q, v, x)``; ``convex`` draws SPD Hessians."""
    d = problem.dim
    lo, hi = np.asarray(problem.domain.lo), np.asarray(problem.domain.hi)
    x = lo + (hi - lo) * rng.random((n, d))
    G = rng.normal(size=(n, d, d))
    if convex:
        P = np.einsum("nij,nkj->nik", G, G) + 0.5 * np.eye(d)
    else:
        P = 0.5 * (G + np.swapaxes(G, 1, 2))
    return P, rng.normal(size=(n, d)), rng.normal(size=n), x


def audit_partials(
    problem: ProblemDef,
    samples: int = 200,
    seed: int = 42,
    tolerance: float = 1e-5,
    step: float = 1e-6,
) -> PartialsReport:
    """Compare analytic partials with central differences of ``eval_F``.

    Samples where a min-type operator switches branch inside the difference
    step are skipped and counted.
    """
    rng = np.random.default_rng(seed)
    P, q, v, x = random_states(problem, samples, rng)
    F = problem.eval_F
    switched = np.zeros(samples, dtype=bool)
    fam = problem.controls

    def branch(P_, v_):
        return np.argmin(fam.values(P_, v_), axis=1) if fam is not None else None

    base = branch(P, v)

    def central(bump: Callable[[float], Tuple]) -> np.ndarray:
        plus, minus = bump(step), bump(-step)
        if fam is not None:
            switched[:] |= (branch(plus[0], plus[2]) != base) | (branch(minus[0], minus[2]) != base)
        return (F(*plus) - F(*minus)) / (2 * step)

    def rel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.abs(a - b) / np.maximum(1.0, np.abs(b))

    errors: Dict[str, np.ndarray] = {"dF_dP": np.zeros(samples), "dF_dq": np.zeros(samples), "dF_dv": np.zeros(samples)}
    d = problem.dim
    if problem.dF_dP is not None:
        exact = problem.dF_dP(P, q, v, x)
        for i in range(d):
            for j in range(d):
                E = np.zeros((d, d))
                E[i, j] = 1.0
                fd = central(lambda t: (P + t * E, q, v, x))
                errors["dF_dP"] = np.maximum(errors["dF_dP"], rel(fd, exact[:, i, j]))
    if problem.dF_dq is not None:
        exact = problem.dF_dq(P, q, v, x)
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            fd = central(lambda t: (P, q + t * e, v, x))
            errors["dF_dq"] = np.maximum(errors["dF_dq"], rel(fd, exact[:, i]))
    if problem.dF_dv is not None:
        fd = central(lambda t: (P, q, v + t, x))
        errors["dF_dv"] = np.maximum(errors["dF_dv"], rel(fd, problem.dF_dv(P, q, v, x)))

    keep = ~switched
    max_errors = {k: float(e[keep].max()) if keep.any() else 0.0 for k, e in errors.items()}

    violations = 0
    if problem.dF_dP is not None and problem.dF_dv is not None:
        Pc, qc, vc, xc = random_states(problem, samples, rng, convex=True)
        A = -problem.dF_dP(Pc, qc, vc, xc)
        sym = 0.5 * (A + np.swapaxes(A, 1, 2))
        asym = np.abs(A - np.swapaxes(A, 1, 2)).max(axis=(1, 2))
        lam = np.linalg.eigvalsh(sym).min(axis=1)
        violations = int(np.sum((lam < -1e-12) | (asym > 1e-12) | (problem.dF_dv(Pc, qc, vc, xc) < 0)))

    report = PartialsReport(problem.name, samples, max_errors, int(switched.sum()), violations, tolerance)
    logger.debug("partials audit %s: %s", problem.name, report)
    return report
