"""Tests for the structural audits, including negative controls."""

import numpy as np
import pytest

from narrowstencil.core.audits import (
    audit_consistency,
    audit_elliptic_compat,
    audit_gmonotonicity,
    audit_reduced_form,
    scheme_operator,
)
from narrowstencil.core.grid import Domain, GridFunction, build_grid
from narrowstencil.core.problems import (
    ControlSet,
    make_constant_coefficient,
    make_gauss_curvature,
    make_hjb,
    make_monge_ampere,
)
from narrowstencil.core.scheme import SchemeParams
from narrowstencil.core.solver import SIGMA_SCHEDULE, solve_continuation

from conftest import unit_square

NONLINEAR = [make_monge_ampere, make_gauss_curvature, lambda: make_hjb(ControlSet(4, 8))]


# ------------------------------------------------------------ consistency
@pytest.mark.parametrize("factory", NONLINEAR)
def test_consistency_on_random_quadratics(factory):
    report = audit_consistency(SchemeParams(10.0, 1.0), factory())
    assert report.passed, report.to_text()
    assert report.details["samples"] == 1000


def test_consistency_flags_corrupted_operator(monge_ampere):
    honest = scheme_operator(monge_ampere, SchemeParams())

    def corrupted(pp, pm, mp, mm, q, v, x):
        return honest(pp, pm, mp, mm, q, v, x) + 1e-6 * x[:, 0]

    report = audit_consistency(SchemeParams(), monge_ampere, operator=corrupted)
    assert not report.passed
    assert report.worst > 1e-8


# ------------------------------------------------------------ reduced form
@pytest.mark.parametrize("factory", [make_monge_ampere, lambda: make_hjb(ControlSet(4, 8))])
def test_reduced_form(factory):
    assert audit_reduced_form(SchemeParams(1.0, 1.0), factory()).passed


def test_reduced_form_flags_single_slot_operator(monge_ampere):
    def lopsided(pp, pm, mp, mm, q, v, x):
        return monge_ampere.eval_F(pp, q, v, x)

    report = audit_reduced_form(SchemeParams(), monge_ampere, operator=lopsided)
    assert not report.passed
    assert report.location["pair"] == "tilde"


# --------------------------------------------------------- g-monotonicity
def test_linear_operator_is_monotone(skewed_coefficient, rng):
    grid = unit_square(5)
    U = GridFunction(grid, rng.normal(size=grid.size))
    assert audit_gmonotonicity(U, SchemeParams(0.0, 1.0), skewed_coefficient).passed


def test_convex_state_is_monotone(monge_ampere):
    grid = unit_square(6)
    U = GridFunction.sample(grid, monge_ampere.exact_u)
    report = audit_gmonotonicity(U, SchemeParams(), monge_ampere)
    assert report.passed, report.to_text()


def test_concave_state_breaks_monotonicity(monge_ampere):
    grid = unit_square(6)
    exact = GridFunction.sample(grid, monge_ampere.exact_u)
    concave = GridFunction(grid, -3.0 * exact.values)
    # weight frozen at the convex reference, partials taken at the concave state
    report = audit_gmonotonicity(concave, SchemeParams(), monge_ampere, reference=exact)
    assert not report.passed
    assert report.worst > 1e-3
    assert report.location["slot"] in ("++", "+-", "-+", "--")


@pytest.mark.parametrize("factory", [make_monge_ampere, make_gauss_curvature])
def test_converged_iterate_is_monotone(factory):
    problem = factory()
    grid = build_grid(Domain.box(0.0, 1.0), (10, 10))
    result = solve_continuation(grid, problem, SIGMA_SCHEDULE[:-1])
    assert result.report.converged
    report = audit_gmonotonicity(result.solution, SchemeParams(0.0, 1.0), problem)
    assert report.passed, report.to_text()


# ------------------------------------------------- elliptic compatibility
def test_linear_compatibility_constant(skewed_coefficient):
    report = audit_elliptic_compat(SchemeParams(), skewed_coefficient)
    assert report.passed
    # dF/dP~ + dF/dP^ = -A, and lambda_min(A) is the ellipticity constant
    assert report.worst == pytest.approx(1.0, rel=1e-5)


def test_monge_ampere_compatibility_positive(monge_ampere):
    report = audit_elliptic_compat(SchemeParams(1.0, 1.0), monge_ampere)
    assert report.passed
    assert report.worst > 0.0


def test_degenerate_state_gives_zero_constant(monge_ampere):
    P = np.array([[[1.0, 0.0], [0.0, 0.0]]])
    samples = (P, np.zeros((1, 2)), np.zeros(1), np.array([[0.5, 0.5]]))
    report = audit_elliptic_compat(SchemeParams(), monge_ampere, samples=samples)
    assert report.worst == pytest.approx(0.0, abs=1e-6)
    assert report.passed
    assert not audit_elliptic_compat(SchemeParams(), monge_ampere, samples=samples, minimum=0.5).passed


def test_reports_serialize(monge_ampere):
    data = audit_consistency(SchemeParams(), monge_ampere, samples=10).to_dict()
    assert data["name"] == "consistency"
    assert isinstance(data["location"]["x"], list)


def test_poisson_compatibility_matches_identity():
    report = audit_elliptic_compat(SchemeParams(), make_constant_coefficient())
    assert report.worst == pytest.approx(1.0, rel=1e-5)
