"""Tests for the narrow-stencil operator, its residual and its Jacobian."""

import numpy as np
import pytest

from narrowstencil.core.errors import SchemeParameterError
from narrowstencil.core.fd_ops import hessian_bundle
from narrowstencil.core.grid import Domain, GridFunction, build_grid
from narrowstencil.core.problems import ControlSet, make_constant_coefficient, make_hjb
from narrowstencil.core.scheme import (
    DiscreteSystem,
    SchemeParams,
    assemble_jacobian,
    assemble_residual,
    eval_Fhat,
)
from narrowstencil.harness.lemmas import section_matrix

from conftest import unit_square, zero_jet


# ---------------------------------------------------------------- params
@pytest.mark.parametrize("gamma,sigma", [(0.0, -1.0), (-2.0, 1.0)])
def test_unsafe_moment_rejected(gamma, sigma):
    with pytest.raises(SchemeParameterError):
        SchemeParams(gamma, sigma)
    assert SchemeParams(gamma, sigma, unsafe=True).sigma == sigma


def test_shift_with_cancelling_gamma():
    params = SchemeParams(gamma=-0.5, sigma=0.5)
    np.testing.assert_allclose(params.shift(2), [[0.0, 0.5], [0.5, 0.0]])


def test_fixed_weight_requires_matrix():
    with pytest.raises(SchemeParameterError):
        SchemeParams(moment_mode="fixed_weight")
    with pytest.raises(SchemeParameterError):
        SchemeParams(moment_mode="adaptive")
    params = SchemeParams.fixed(np.eye(2), gamma=1.0)
    assert params.fixed_weight == ((1.0, 0.0), (0.0, 1.0))
    assert params.with_moment(2, 3).label() == "gamma=2,sigma=3"


# ------------------------------------------------------------ point value
def test_quadratic_state_reproduces_operator(rng, monge_ampere):
    grid = unit_square(6)
    a, b, c = 1.0 + rng.random(3)
    U = GridFunction.sample(grid, lambda x: a * x[:, 0] ** 2 + 0.3 * b * x[:, 0] * x[:, 1] + c * x[:, 1] ** 2)
    H = np.array([[2 * a, 0.3 * b], [0.3 * b, 2 * c]])
    params = SchemeParams(gamma=1.0, sigma=1.0)
    for node in grid.interior_ids[::5]:
        x = grid.coordinates([node])[0]
        grad = np.array([2 * a * x[0] + 0.3 * b * x[1], 0.3 * b * x[0] + 2 * c * x[1]])
        expected = monge_ampere.evaluate_point(H, grad, U.values[node], x)
        assert eval_Fhat(U, params, monge_ampere, node) == pytest.approx(expected, abs=1e-9)


def test_upwinded_linear_operator(rng):
    A = np.array([[2.0, -1.0], [-1.0, 2.0]])
    problem = make_constant_coefficient(A)
    grid = unit_square(6)
    system = DiscreteSystem(grid, problem, SchemeParams())
    U = system.extend(rng.normal(size=grid.n_interior))
    for node in grid.interior_ids:
        bundle = hessian_bundle(U, node)
        f = problem.source(grid.coordinates([node]))[0]
        # positive entries take the hat Hessian, negative ones the tilde Hessian
        expected = (
            -2.0 * bundle.dhat[0, 0] - 2.0 * bundle.dhat[1, 1]
            + bundle.dtilde[0, 1] + bundle.dtilde[1, 0] - f
        )
        assert eval_Fhat(U, SchemeParams(), problem, node) == pytest.approx(expected, rel=1e-10, abs=1e-8)


# --------------------------------------------------------------- residual
def test_zero_data_gives_zero_residual():
    problem = make_constant_coefficient(np.array([[2.0, 1.0], [1.0, 2.0]]), jet=zero_jet)
    system = DiscreteSystem(unit_square(5), problem, SchemeParams(1.0, 1.0))
    np.testing.assert_array_equal(system.residual(np.zeros(system.size)), 0.0)


def test_linear_residual_is_affine(rng, skewed_coefficient):
    system = DiscreteSystem(unit_square(6), skewed_coefficient, SchemeParams(0.5, 1.0))
    L, b = system.linear_system()
    for _ in range(3):
        u = rng.normal(size=system.size)
        r = system.residual(u)
        np.testing.assert_allclose(r, L @ u - b, atol=1e-9 * (1.0 + np.abs(r).max()))


def test_residual_reports_boundary_misfit(monge_ampere):
    grid = unit_square(4)
    U = GridFunction.sample(grid, monge_ampere.exact_u)
    assert assemble_residual(U, SchemeParams(), monge_ampere).boundary_misfit == pytest.approx(0.0, abs=1e-14)
    U.values[grid.boundary_ids[0]] += 0.25
    assert assemble_residual(U, SchemeParams(), monge_ampere).boundary_misfit == pytest.approx(0.25)


def test_truncation_error_is_second_order(monge_ampere):
    errors, hs = [], []
    for sides in (12, 24, 48):
        grid = build_grid(Domain.box(0.0, 1.0), (sides, sides))
        system = DiscreteSystem(grid, monge_ampere, SchemeParams(1.0, 1.0))
        exact = monge_ampere.exact_u(grid.coordinates(grid.interior_ids))
        r = system.residual(exact)
        # first-layer nodes read ghosts from the closure, which is only consistent to first order
        deep = grid.interior_depth() >= 2
        errors.append(np.abs(r[deep]).max())
        hs.append(grid.h_diag)
    orders = np.log(np.array(errors[:-1]) / errors[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(orders >= 1.8), orders


# --------------------------------------------------------------- Jacobian
def test_jacobian_matches_finite_differences(rng, monge_ampere):
    grid = unit_square(5)
    system = DiscreteSystem(grid, monge_ampere, SchemeParams(1.0, 1.0))
    u = monge_ampere.exact_u(grid.coordinates(grid.interior_ids)) + 0.01 * rng.normal(size=system.size)
    J, ev = system.jacobian(u)
    fd = system.fd_jacobian(u, ev)
    scale = np.abs(J.toarray()).max()
    assert np.abs((J - fd).toarray()).max() <= 1e-5 * scale


def test_hjb_jacobian_matches_finite_differences(rng):
    problem = make_hjb(ControlSet(4, 8))
    grid = unit_square(5)
    system = DiscreteSystem(grid, problem, SchemeParams(0.0, 1.0))
    u = problem.exact_u(grid.coordinates(grid.interior_ids)) + 0.01 * rng.normal(size=system.size)
    J, ev = system.jacobian(u)
    fd = system.fd_jacobian(u, ev)
    assert np.abs((J - fd).toarray()).max() <= 1e-5 * np.abs(J.toarray()).max()


def test_jacobian_stencil_width(monge_ampere):
    grid = unit_square(8)
    system = DiscreteSystem(grid, monge_ampere, SchemeParams(1.0, 1.0))
    pattern = system.sparsity()
    assert pattern.getnnz(axis=1).max() <= 13
    J = assemble_jacobian(system.extend(monge_ampere.exact_u(grid.coordinates(grid.interior_ids))), system.params, monge_ampere)
    outside = abs(J) - abs(J).multiply(pattern)
    assert outside.count_nonzero() == 0


def test_poisson_jacobian_is_five_point_laplacian():
    problem = make_constant_coefficient()
    assert problem.name == "poisson"
    system = DiscreteSystem(unit_square(6), problem, SchemeParams())
    J, _ = system.jacobian(np.zeros(system.size))
    five_point = -(system.ops.hat[0, 0] + system.ops.hat[1, 1])
    np.testing.assert_allclose(J.toarray(), five_point.toarray(), atol=1e-9)


def test_zero_fixed_weight_gives_section_operator(skewed_coefficient):
    grid = unit_square(5)
    system = DiscreteSystem(grid, skewed_coefficient, SchemeParams.fixed(np.zeros((2, 2))))
    J, _ = system.jacobian(np.zeros(system.size))
    L, _ = section_matrix(grid, np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(J.toarray(), L, atol=1e-8)

