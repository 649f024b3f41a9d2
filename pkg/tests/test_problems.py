"""Tests for the benchmark problem definitions."""

import numpy as np
import pytest

from narrowstencil.core.errors import InvalidProblemError
from narrowstencil.core.problems import (
    PROBLEM_NAMES,
    ControlSet,
    audit_partials,
    build_control_family,
    get_problem,
    hjb_diffusion,
    make_gauss_curvature,
    make_hjb,
    make_linear_nonaligned,
    make_monge_ampere,
    nonaligned_coefficient,
    random_states,
)


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_partials_audit(name):
    report = audit_partials(get_problem(name, ControlSet(4, 8)))
    assert report.passed, report.max_relative_error
    assert report.ellipticity_violations == 0


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_manufactured_solution_satisfies_pde(name, rng):
    problem = get_problem(name, ControlSet(4, 8))
    lo, hi = np.asarray(problem.domain.lo), np.asarray(problem.domain.hi)
    x = lo + (hi - lo) * rng.random((100, 2))
    u, grad, H = problem.exact_jet(x)
    np.testing.assert_allclose(problem.eval_F(H, grad, u, x), 0.0, atol=1e-10)
    np.testing.assert_allclose(problem.exact_u(x), u)


def test_unknown_problem():
    with pytest.raises(InvalidProblemError):
        get_problem("heat")
    with pytest.raises(InvalidProblemError):
        make_linear_nonaligned(3)


# ------------------------------------------------------------ linear
def test_nonaligned_coefficient_spectrum(rng):
    x = -1.0 + 2.0 * rng.random((500, 2))
    A = nonaligned_coefficient(x)
    np.testing.assert_allclose(A, np.swapaxes(A, 1, 2), atol=1e-14)
    lam = np.linalg.eigvalsh(A)
    assert lam.min() >= 1.0 - 1e-12
    assert lam.max() <= 4.0 + 1e-12


def test_nonaligned_sign_of_zero():
    A = nonaligned_coefficient(np.array([[0.0, 0.0]]))
    expected = sorted([2.0 - np.sin(1.0) * np.cos(1.0), 2.0])
    np.testing.assert_allclose(np.linalg.eigvalsh(A[0]), expected, atol=1e-12)


def test_low_regularity_solution_finite_at_origin():
    problem = make_linear_nonaligned(2)
    x = np.array([[0.0, 0.5], [0.0, -0.3]])
    u, grad, H = problem.exact_jet(x)
    assert np.all(np.isfinite(u)) and np.all(np.isfinite(grad)) and np.all(np.isfinite(H))


# --------------------------------------------------------------- HJB
def test_hjb_diffusion_identities():
    angle = np.linspace(0.0, np.pi, 7)
    A = hjb_diffusion(np.zeros_like(angle), angle)
    np.testing.assert_allclose(A, np.broadcast_to(0.5 * np.eye(2), A.shape), atol=1e-14)

    phi = np.linspace(0.0, np.pi / 3, 7)
    A = hjb_diffusion(phi, angle)
    np.testing.assert_allclose(np.trace(A, axis1=1, axis2=2), 1.5, atol=1e-14)


def test_hjb_exact_value():
    problem = make_hjb(ControlSet(2, 2))
    assert problem.exact_u(np.array([[0.5, 0.5]]))[0] == pytest.approx(np.exp(0.25))


def test_control_sample_order():
    controls = ControlSet(3, 4)
    family = build_control_family(controls)
    assert family.size == 12
    assert family.phi[0] == 0.0
    assert family.phi[-1] == pytest.approx(np.pi / 3)
    np.testing.assert_array_equal(family.labels[:5], [[0, 0], [0, 1], [0, 2], [0, 3], [1, 0]])


def test_empty_control_sample():
    with pytest.raises(InvalidProblemError):
        ControlSet(0, 4)


def test_control_refinement_converges(rng):
    problem = make_monge_ampere()
    P, q, v, x = random_states(problem, 50, rng)
    levels = [ControlSet(3, 4)]
    for _ in range(3):
        levels.append(levels[-1].refined())
    minima = [build_control_family(c).values(P, v).min(axis=1) for c in levels]
    gaps = [np.max(np.abs(m - minima[-1])) for m in minima[:-1]]
    # nested samples: the minimum can only decrease with refinement
    for coarse, fine in zip(minima, minima[1:]):
        assert np.all(fine <= coarse + 1e-12)
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


# ---------------------------------------------------- Monge-Ampere family
def test_monge_ampere_data():
    problem = make_monge_ampere()
    origin = np.array([[0.0, 0.0]])
    assert problem.source(origin)[0] == pytest.approx(1.0)
    x = np.array([0.3, 0.7])
    assert problem.evaluate_point(np.eye(2), np.zeros(2), 0.0, x) == pytest.approx(-1.0 + problem.source(x[None])[0])


def test_gauss_curvature_data():
    problem = make_gauss_curvature()
    origin = np.array([[0.0, 0.0]])
    assert problem.source(origin)[0] == pytest.approx(10.0)

    x = np.array([0.2, 0.9])
    P = np.array([[2.0, 0.3], [0.3, 1.5]])
    reduced = -np.linalg.det(P) + 0.1 * problem.source(x[None])[0]
    assert problem.evaluate_point(P, np.zeros(2), 0.0, x) == pytest.approx(reduced)


def test_gauss_curvature_gradient_partial(rng):
    problem = make_gauss_curvature()
    P, q, v, x = random_states(problem, 20, rng)
    step = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        fd = (problem.eval_F(P, q + e, v, x) - problem.eval_F(P, q - e, v, x)) / (2 * step)
        exact = problem.dF_dq(P, q, v, x)[:, i]
        np.testing.assert_allclose(fd, exact, rtol=1e-6, atol=1e-8)
