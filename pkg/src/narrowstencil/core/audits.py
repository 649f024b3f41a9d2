"""Structural audits of the scheme: consistency, g-monotonicity, reduced form,
elliptic compatibility.

Audits work on the unreduced operator ``F^(P++, P+-, P-+, P--, q, v, x)``.
The default operator is the scheme itself; tests pass corrupted operators as
negative controls. The moment weight is frozen at a reference state, the same
lagging the Newton Jacobian uses.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .fd_ops import apply_stencil, first_stencil, hessian_stencil
from .grid import GridFunction
from .problems import ProblemDef, random_states
from .scheme import DiscreteSystem, LocalEvaluation, SchemeParams, local_fhat

logger = logging.getLogger(__name__)

UnreducedOperator = Callable[..., np.ndarray]
SLOTS = ("++", "+-", "-+", "--")

DERIVATIVE_TOL = 1e-8
DERIVATIVE_STEP = 1e-6


@dataclass
class AuditReport:
    """Pass/fail with the worst observed value and where it occurred."""
    name: str
    passed: bool
    worst: float
    tolerance: float
    location: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return json.loads(json.dumps(asdict(self), default=_jsonable))

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: worst={self.worst:.3e} (tol {self.tolerance:.1e})"
        if self.location:
            text += " at " + ", ".join(f"{k}={v}" for k, v in self.location.items())
        return text


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def scheme_operator(
    problem: ProblemDef, params: SchemeParams, frozen: Optional[LocalEvaluation] = None
) -> UnreducedOperator:
    """The scheme as a function of the four one-sided Hessians."""

    def operator(pp, pm, mp, mm, q, v, x):
        return local_fhat(problem, params, 0.5 * (pp + mm), 0.5 * (pm + mp), q, v, x, frozen).value

    return operator


def _symmetric_samples(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    G = rng.normal(size=(n, d, d))
    return 0.5 * (G + np.swapaxes(G, 1, 2))


# ------------------------------------------------------------- consistency
def audit_consistency(
    params: SchemeParams,
    problem: ProblemDef,
    samples: int = 1000,
    seed: int = 42,
    tolerance: float = 1e-10,
    operator: Optional[UnreducedOperator] = None,
) -> AuditReport:
    """``F^(P, P, P, P, q, v, x) = F(P, q, v, x)`` on random quadratic states."""
    operator = operator or scheme_operator(problem, params)
    rng = np.random.default_rng(seed)
    P, q, v, x = random_states(problem, samples, rng)
    deviation = np.abs(operator(P, P, P, P, q, v, x) - problem.eval_F(P, q, v, x))
    k = int(np.argmax(deviation))
    worst = float(deviation[k])
    return AuditReport(
        "consistency",
        worst <= tolerance,
        worst,
        tolerance,
        {"x": x[k].tolist()},
        {"problem": problem.name, "samples": samples, "seed": seed, "params": params.label()},
    )


# ------------------------------------------------------------ reduced form
def audit_reduced_form(
    params: SchemeParams,
    problem: ProblemDef,
    samples: int = 100,
    seed: int = 42,
    tolerance: float = 1e-12,
    operator: Optional[UnreducedOperator] = None,
) -> AuditReport:
    """Shifting ``(P++, P--)`` by ``(+E, -E)`` or ``(P+-, P-+)`` by ``(+E, -E)`` changes nothing."""
    operator = operator or scheme_operator(problem, params)
    rng = np.random.default_rng(seed)
    d = problem.dim
    _, q, v, x = random_states(problem, samples, rng)
    pp, pm, mp, mm, E = (_symmetric_samples(rng, samples, d) for _ in range(5))
    base = operator(pp, pm, mp, mm, q, v, x)
    scale = 1.0 + np.abs(base)
    tilde_shift = np.abs(operator(pp + E, pm, mp, mm - E, q, v, x) - base) / scale
    hat_shift = np.abs(operator(pp, pm + E, mp - E, mm, q, v, x) - base) / scale
    deviation = np.maximum(tilde_shift, hat_shift)
    k = int(np.argmax(deviation))
    worst = float(deviation[k])
    return AuditReport(
        "reduced_form",
        worst <= tolerance,
        worst,
        tolerance,
        {"x": x[k].tolist(), "pair": "tilde" if tilde_shift[k] >= hat_shift[k] else "hat"},
        {"problem": problem.name, "samples": samples, "seed": seed, "params": params.label()},
    )


# -------------------------------------------------------- g-monotonicity
def one_sided_fields(U: GridFunction) -> Dict[str, np.ndarray]:
    """The four one-sided Hessians at every interior node, ``(n, d, d)`` each."""
    grid = U.grid
    d = grid.dim
    padded = U.padded()
    out = {}
    for slot in SLOTS:
        H = np.empty((grid.n_interior, d, d))
        for i in range(d):
            for j in range(d):
                H[:, i, j] = apply_stencil(U, hessian_stencil(grid.spacings, i, j, slot), padded)
        out[slot] = H
    return out


def audit_gmonotonicity(
    U: GridFunction,
    params: SchemeParams,
    problem: ProblemDef,
    reference: Optional[GridFunction] = None,
    tolerance: float = DERIVATIVE_TOL,
    operator: Optional[UnreducedOperator] = None,
) -> AuditReport:
    """Sign pattern of the slot derivatives at every interior node of ``U``.

    Requires ``dF^/dP++, dF^/dP-- >= -tol``, ``dF^/dP+-, dF^/dP-+ <= tol``
    entrywise and ``dF^/dv >= -tol``. The moment weight is frozen at
    ``reference`` (default ``U``).
    """
    grid = U.grid
    system = DiscreteSystem(grid, problem, params)
    state = system.extend(U.interior())
    if operator is None:
        frozen, _ = system.evaluate((reference or state).interior())
        operator = scheme_operator(problem, params, frozen)

    slots = one_sided_fields(state)
    d = grid.dim
    q = np.stack(
        [apply_stencil(state, first_stencil(grid.spacings, i, "central")) for i in range(d)], -1
    )
    v = state.interior()
    x = system.x
    args = [slots[s] for s in SLOTS]

    worst, where = 0.0, {}
    checked = 0
    for s, slot in enumerate(SLOTS):
        sign = 1.0 if slot in ("++", "--") else -1.0
        for i in range(d):
            for j in range(d):
                step = DERIVATIVE_STEP * (1.0 + np.abs(args[s][:, i, j]))
                plus = [a.copy() for a in args]
                minus = [a.copy() for a in args]
                plus[s][:, i, j] += step
                minus[s][:, i, j] -= step
                deriv = (operator(*plus, q, v, x) - operator(*minus, q, v, x)) / (2 * step)
                violation = -sign * deriv
                k = int(np.argmax(violation))
                checked += 1
                if violation[k] > worst:
                    worst = float(violation[k])
                    where = {"x": x[k].tolist(), "slot": slot, "entry": [i, j], "derivative": float(deriv[k])}

    step = DERIVATIVE_STEP * (1.0 + np.abs(v))
    dv = (operator(*args, q, v + step, x) - operator(*args, q, v - step, x)) / (2 * step)
    k = int(np.argmax(-dv))
    if -dv[k] > worst:
        worst = float(-dv[k])
        where = {"x": x[k].tolist(), "slot": "v", "derivative": float(dv[k])}

    report = AuditReport(
        "g_monotonicity",
        worst <= tolerance,
        worst,
        tolerance,
        where,
        {"problem": problem.name, "params": params.label(), "nodes": grid.n_interior, "checks": checked + 1},
    )
    logger.info(report.to_text())
    return report


# ------------------------------------------------- elliptic compatibility
def reduced_slot_derivatives(
    operator: UnreducedOperator, P, q, v, x
) -> Tuple[np.ndarray, np.ndarray]:
    """``(dF^/dP~, dF^/dP^)`` at ``P~ = P^ = P`` by central differences."""
    n, d, _ = P.shape
    dtilde = np.empty_like(P)
    dhat = np.empty_like(P)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            step = (DERIVATIVE_STEP * (1.0 + np.abs(P[:, i, j])))[:, None, None]
            # P~ enters through P++ and P--; P^ through P+- and P-+
            up, dn = P + step * E, P - step * E
            dtilde[:, i, j] = (operator(up, P, P, up, q, v, x) - operator(dn, P, P, dn, q, v, x)) / (2 * step[:, 0, 0])
            dhat[:, i, j] = (operator(P, up, up, P, q, v, x) - operator(P, dn, dn, P, q, v, x)) / (2 * step[:, 0, 0])
    return dtilde, dhat


def audit_elliptic_compat(
    params: SchemeParams,
    problem: ProblemDef,
    samples: Any = 200,
    seed: int = 42,
    minimum: float = 0.0,
    tolerance: float = DERIVATIVE_TOL,
    operator: Optional[UnreducedOperator] = None,
) -> AuditReport:
    """Worst ``c`` with ``dF^/dP~ + dF^/dP^ <= -c lambda I`` over sampled states.

    ``samples`` is a count of random convex states or an explicit
    ``(P, q, v, x)`` tuple.
    """
    if isinstance(samples, int):
        rng = np.random.default_rng(seed)
        P, q, v, x = random_states(problem, samples, rng, convex=True)
    else:
        P, q, v, x = (np.asarray(a, dtype=float) for a in samples)
    if operator is None:
        frozen = local_fhat(problem, params, P, P, q, v, x)
        operator = scheme_operator(problem, params, frozen)
    dtilde, dhat = reduced_slot_derivatives(operator, P, q, v, x)
    total = dtilde + dhat
    sym = -0.5 * (total + np.swapaxes(total, 1, 2))
    c = np.linalg.eigvalsh(sym).min(axis=1) / problem.ellipticity
    k = int(np.argmin(c))
    worst = float(c[k])
    return AuditReport(
        "elliptic_compatibility",
        worst >= minimum - tolerance,
        worst,
        tolerance,
        {"x": x[k].tolist()},
        {"problem": problem.name, "params": params.label(), "lambda": problem.ellipticity, "samples": len(c)},
    )
