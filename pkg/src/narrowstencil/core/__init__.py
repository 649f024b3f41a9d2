"""Numerical core: grids, operators, problems, the scheme and its solvers."""
