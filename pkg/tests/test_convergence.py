"""Tests for error measurement, order extraction and the refinement studies.

Runs against the published tables are marked ``slow``.
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from narrowstencil.core.grid import GridFunction
from narrowstencil.core.problems import (
    ControlSet,
    make_constant_coefficient,
    make_gauss_curvature,
    make_hjb,
    make_linear_nonaligned,
    make_monge_ampere,
)
from narrowstencil.core.solver import BALANCED_SCHEDULE, GAMMA_SCHEDULE, SolveConfig, grid_for
from narrowstencil.harness.convergence import linf_error, observed_orders, run_convergence
from narrowstencil.harness.reference import (
    REFERENCE,
    CURVATURE_H,
    reference_column,
    reference_ratios,
)

from conftest import unit_square


def within(observed, published, factor):
    return published / factor <= observed <= published * factor


# ------------------------------------------------------------ measurement
def test_linf_error_of_exact_samples(monge_ampere):
    grid = unit_square(5)
    U = GridFunction.sample(grid, monge_ampere.exact_u)
    assert linf_error(U, monge_ampere.exact_u) == 0.0
    shifted = GridFunction(grid, U.values + 0.125)
    assert linf_error(shifted, monge_ampere.exact_u) == pytest.approx(0.125)


def test_linf_error_ignores_ghosts(monge_ampere):
    grid = unit_square(4)
    U = GridFunction.sample(grid, monge_ampere.exact_u)
    U.values[grid.ghost_ids] += 100.0
    assert linf_error(U, monge_ampere.exact_u) == 0.0


def test_observed_orders():
    hs = [0.1, 0.05, 0.025]
    orders = observed_orders([1e-2, 2.5e-3, 6.25e-4], hs)
    assert orders[0] is None
    assert orders[1] == pytest.approx(2.0)
    assert orders[2] == pytest.approx(2.0)
    assert observed_orders([1e-2, None, 1e-3], hs) == [None, None, None]


@given(
    st.lists(st.floats(1e-8, 1.0), min_size=2, max_size=6),
    st.floats(1e-3, 1e3),
)
def test_orders_scale_invariant(errors, scale):
    hs = [0.5 ** k for k in range(len(errors))]
    base = observed_orders(errors, hs)
    scaled = observed_orders([e * scale for e in errors], hs)
    for a, b in zip(base, scaled):
        if a is None:
            assert b is None
        else:
            assert b == pytest.approx(a, abs=1e-9)


# ---------------------------------------------------------------- studies
def test_duplicate_mesh_flagged():
    table = run_convergence(make_constant_coefficient(), meshes=(6, 6, 12))
    assert table.rows[1].flag == "degenerate refinement"
    assert table.rows[1].order is None
    assert table.rows[2].order is not None


def test_meshes_must_refine():
    with pytest.raises(ValueError):
        run_convergence(make_constant_coefficient(), meshes=(12, 6))
    with pytest.raises(ValueError):
        run_convergence(make_constant_coefficient(), meshes=())


def test_poisson_second_order():
    table = run_convergence(make_constant_coefficient(), meshes=(6, 12, 24))
    assert table.h_measure == "h_diag"
    assert all(r.converged for r in table.rows)
    assert table.orders[-1] > 1.8


def test_failed_rows_are_recorded(monge_ampere):
    table = run_convergence(monge_ampere, meshes=(8, 10), schedule=[(0.0, 0.0)], config=SolveConfig(initial_guess="zero"))
    for row in table.rows:
        assert row.error_linf is None
        assert row.flag.startswith("solve failed")


def test_threaded_rows_match_serial():
    problem = make_constant_coefficient()
    serial = run_convergence(problem, meshes=(6, 8, 10))
    threaded = run_convergence(problem, meshes=(6, 8, 10), workers=3)
    np.testing.assert_allclose(threaded.errors, serial.errors, rtol=1e-12)


# -------------------------------------------------------------- reference
def test_reference_columns():
    assert reference_column("linear1", 0, 0).errors[1] == 3.86e-3
    assert reference_column("linear2", 0, 0).column == "u2"
    assert reference_column("monge_ampere", -1, 1).column == "sigma=1"
    assert reference_column("monge_ampere", 0, 0).error_at(12) == 3.41e-3
    assert reference_column("monge_ampere", 2, 1) is None
    assert reference_column("hjb", 10, 0).error_at(7) is None
    assert len(REFERENCE) == 2 + 5 + 9 + 9


def test_reference_mesh_sizes_match_grids():
    problem = make_monge_ampere()
    for mesh, h in zip((6, 12, 24, 48), CURVATURE_H):
        assert grid_for(problem, mesh).h_diag == pytest.approx(h, rel=5e-3)


def test_reference_ratios():
    ratios = reference_ratios("monge_ampere", [12], [{"gamma=0,sigma=0": 6.82e-3, "gamma=3,sigma=1": 1.0}])
    assert ratios == [{"gamma=0,sigma=0": pytest.approx(2.0)}]


# ------------------------------------------------------------- acceptance
@pytest.mark.slow
def test_linear_smooth_solution():
    problem = make_linear_nonaligned(1)
    meshes = (10, 40, 80, 120)
    table = run_convergence(problem, meshes=meshes)
    assert table.h_measure == "h_axis"
    column = reference_column(problem.name, 0, 0)
    for mesh, err in zip(meshes, table.errors):
        assert within(err, column.error_at(mesh), 2.0), (mesh, err)
    for order in table.orders[-2:]:
        assert 1.85 <= order <= 2.15


@pytest.mark.slow
def test_linear_low_regularity_solution():
    table = run_convergence(make_linear_nonaligned(2), meshes=(120, 180, 240, 300))
    for order in table.orders[-3:]:
        assert 1.25 <= order <= 1.55


@pytest.mark.slow
def test_hjb_continuation_columns():
    meshes = (10, 16, 24, 32)
    table = run_convergence(
        make_hjb(ControlSet(16, 32)),
        meshes=meshes,
        schedule=GAMMA_SCHEDULE,
        warm_problem=make_hjb(ControlSet(4, 8)),
    )
    final = table.stage_column("gamma=0,sigma=0")
    coarse = table.stage_column("gamma=1000,sigma=0")
    orders = [r.stage_orders for r in table.rows]
    assert 1.6 <= orders[-1]["gamma=0,sigma=0"] <= 2.0
    assert 1.8 <= orders[-1]["gamma=10,sigma=0"] <= 2.3
    assert all(c > f for c, f in zip(coarse, final))
    column = reference_column("hjb", 0, 0)
    for mesh, err in zip(meshes, final):
        assert within(err, column.error_at(mesh), 3.0), (mesh, err)


@pytest.mark.slow
def test_monge_ampere_gamma_continuation():
    meshes = (6, 12, 24, 48)
    table = run_convergence(make_monge_ampere(), meshes=meshes, schedule=GAMMA_SCHEDULE)
    column = reference_column("monge_ampere", 0, 0)
    for mesh, err in zip(meshes, table.errors):
        assert within(err, column.error_at(mesh), 2.0), (mesh, err)
    for order in table.orders[-2:]:
        assert 1.9 <= order <= 2.1


@pytest.mark.slow
def test_monge_ampere_balanced_continuation():
    meshes = (6, 12, 24, 48)
    table = run_convergence(make_monge_ampere(), meshes=meshes, schedule=BALANCED_SCHEDULE)
    column = reference_column("monge_ampere", -1, 1)
    for mesh, err in zip(meshes, table.stage_column("gamma=-1,sigma=1")):
        assert within(err, column.error_at(mesh), 2.0), (mesh, err)
    assert 1.9 <= table.orders[-1] <= 2.1


@pytest.mark.slow
def test_gauss_curvature_gamma_continuation():
    meshes = (6, 12, 24, 48)
    table = run_convergence(make_gauss_curvature(), meshes=meshes, schedule=GAMMA_SCHEDULE)
    column = reference_column("gauss_curvature", 0, 0)
    for mesh, err in zip(meshes, table.errors):
        assert within(err, column.error_at(mesh), 2.0), (mesh, err)
    assert 1.9 <= table.orders[-1] <= 2.2
