"""Solve bookkeeping: per-stage records, reports and the monitor that fills them."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class StageRecord:
    """One solve stage (a single ``(gamma, sigma)`` or a warm start)."""
    gamma: float
    sigma: float
    start_time: float
    end_time: Optional[float] = None
    iterations: int = 0
    residual: float = float("inf")
    verified_residual: Optional[float] = None
    converged: bool = False
    label: str = ""
    failure: Optional[str] = None
    error_linf: Optional[float] = None

    @property
    def duration_seconds(self) -> float:
        if self.end_time is None:
            return time.time() - self.start_time
        return self.end_time - self.start_time

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "gamma": self.gamma,
            "sigma": self.sigma,
            "iterations": self.iterations,
            "residual": self.residual,
            "verified_residual": self.verified_residual,
            "converged": self.converged,
            "failure": self.failure,
            "error_linf": self.error_linf,
            "wall_time": self.duration_seconds,
        }


@dataclass
class SolveReport:
    """Outcome of a solve; ``converged`` implies ``final_residual_linf <= tolerance``."""
    method: str
    tolerance: float
    converged: bool = False
    iterations: int = 0
    final_residual_linf: float = float("inf")
    stage_history: List[StageRecord] = field(default_factory=list)
    wall_time: float = 0.0
    failure: Optional[str] = None
    contraction_ratio: Optional[float] = None
    residual_history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "tolerance": self.tolerance,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual_linf": self.final_residual_linf,
            "wall_time": self.wall_time,
            "failure": self.failure,
            "contraction_ratio": self.contraction_ratio,
            "stage_history": [s.to_dict() for s in self.stage_history],
        }


class SolveMonitor:
    """Collects stage statistics while a solve runs."""

    def __init__(self, method: str, tolerance: float):
        self.report = SolveReport(method=method, tolerance=tolerance)
        self.stage: Optional[StageRecord] = None
        self._start = time.time()

    def start_stage(self, gamma: float, sigma: float, label: str = "") -> StageRecord:
        self.stage = StageRecord(gamma=gamma, sigma=sigma, start_time=time.time(), label=label)
        self.report.stage_history.append(self.stage)
        logger.debug("stage %s started (gamma=%g, sigma=%g)", label or len(self.report.stage_history), gamma, sigma)
        return self.stage

    def record_iteration(self, residual: float) -> None:
        self.report.iterations += 1
        self.report.residual_history.append(residual)
        if self.stage is not None:
            self.stage.iterations += 1
            self.stage.residual = residual

    def end_stage(self, converged: bool, residual: float, failure: Optional[str] = None) -> None:
        if self.stage is None:
            return
        self.stage.end_time = time.time()
        self.stage.converged = converged
        self.stage.residual = residual
        self.stage.failure = failure
        log = logger.info if converged else logger.warning
        log(
            "stage gamma=%g sigma=%g %s after %d iterations, residual %.3e (%.2fs)",
            self.stage.gamma, self.stage.sigma,
            "converged" if converged else f"failed ({failure or 'not converged'})",
            self.stage.iterations, residual, self.stage.duration_seconds,
        )

    def finish(self, converged: bool, residual: float, failure: Optional[str] = None) -> SolveReport:
        self.report.converged = converged and residual <= self.report.tolerance
        self.report.final_residual_linf = residual
        self.report.failure = failure
        self.report.wall_time = time.time() - self._start
        return self.report

