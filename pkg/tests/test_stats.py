"""Tests for solve bookkeeping."""

import pytest

from narrowstencil.core.stats import SolveMonitor


def test_monitor_records_stages():
    monitor = SolveMonitor("newton", 1e-10)
    monitor.start_stage(1000.0, 0.0, "gamma=1000,sigma=0")
    monitor.record_iteration(1e-2)
    monitor.record_iteration(1e-6)
    monitor.end_stage(False, 1e-6, "iteration limit")
    monitor.start_stage(0.0, 0.0)
    monitor.record_iteration(1e-12)
    monitor.end_stage(True, 1e-12)
    report = monitor.finish(True, 1e-12)

    assert report.converged
    assert report.iterations == 3
    assert report.residual_history == [1e-2, 1e-6, 1e-12]
    first, second = report.stage_history
    assert (first.iterations, first.converged, first.failure) == (2, False, "iteration limit")
    assert (second.iterations, second.residual) == (1, 1e-12)
    data = report.to_dict()
    assert [s["label"] for s in data["stage_history"]] == ["gamma=1000,sigma=0", ""]
    assert data["stage_history"][0]["wall_time"] >= 0.0


def test_finish_requires_tolerance():
    monitor = SolveMonitor("pseudo_time", 1e-10)
    report = monitor.finish(True, 1e-3)
    assert not report.converged
    assert report.final_residual_linf == pytest.approx(1e-3)


def test_end_stage_without_stage_is_ignored():
    monitor = SolveMonitor("linear_direct", 1e-10)
    monitor.end_stage(True, 0.0)
    assert monitor.report.stage_history == []
