"""Shared fixtures for the narrowstencil test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from narrowstencil.core.grid import Domain, build_grid, counts_from_interior
from narrowstencil.core.problems import make_constant_coefficient, make_monge_ampere

settings.register_profile("narrowstencil", deadline=None, max_examples=25)
settings.load_profile("narrowstencil")


def unit_square(interior: int):
    return build_grid(Domain.box(0.0, 1.0), counts_from_interior(interior))


def zero_jet(x):
    n = len(x)
    return np.zeros(n), np.zeros((n, 2)), np.zeros((n, 2, 2))


def constant_jet(value: float):
    def jet(x):
        n = len(x)
        return np.full(n, value), np.zeros((n, 2)), np.zeros((n, 2, 2))

    return jet


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_grid():
    return unit_square(5)


@pytest.fixture
def monge_ampere():
    return make_monge_ampere()


@pytest.fixture
def skewed_coefficient():
    return make_constant_coefficient(np.array([[2.0, 1.0], [1.0, 2.0]]))
