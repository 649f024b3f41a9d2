"""Exception hierarchy for narrowstencil."""

from __future__ import annotations

from typing import Any, Dict, Optional, Sequence


class NarrowStencilError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = 1

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable summary used for failure reports."""
        return {"error": type(self).__name__, "message": str(self)}


class InvalidGridError(NarrowStencilError, ValueError):
    """Grid counts or domain bounds are not admissible."""


class StencilError(NarrowStencilError, IndexError):
    """A stencil reaches a node that is not part of the extended grid."""

    def __init__(self, node: Sequence[int], offset: Sequence[int]):
        self.node = tuple(int(m) for m in node)
        self.offset = tuple(int(o) for o in offset)
        super().__init__(
            f"stencil offset {self.offset} from node {self.node} leaves the extended grid"
        )


class InvalidProblemError(NarrowStencilError, ValueError):
    """Problem definition is unusable (unknown name, empty control sample)."""


class ProblemEvaluationError(NarrowStencilError, ArithmeticError):
    """F or one of its partials produced a non-finite value."""

    exit_code = 3

    def __init__(self, message: str, coordinates: Optional[Sequence[float]] = None):
        self.coordinates = None if coordinates is None else [float(c) for c in coordinates]
        if self.coordinates is not None:
            message = f"{message} at x = {self.coordinates}"
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["coordinates"] = self.coordinates
        return data


class CapabilityError(NarrowStencilError, NotImplementedError):
    """Problem lacks the analytic partials an operation needs."""


class SchemeParameterError(NarrowStencilError, ValueError):
    """Moment parameters violate sigma >= 0 and gamma + sigma >= 0."""

    exit_code = 2


class SolverError(NarrowStencilError, RuntimeError):
    """Linear factorization or solve failed."""

    exit_code = 3

    def __init__(self, message: str, condition_estimate: Optional[float] = None):
        self.condition_estimate = condition_estimate
        if condition_estimate is not None:
            message = f"{message} (condition estimate {condition_estimate:.3e})"
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["condition_estimate"] = self.condition_estimate
        return data


class DivergenceError(NarrowStencilError, RuntimeError):
    """Iteration produced NaN or stopped contracting."""

    exit_code = 3


class VerificationError(NarrowStencilError, AssertionError):
    """A verification battery reported failures."""

    exit_code = 4


class ConfigError(NarrowStencilError, ValueError):
    """Configuration could not be parsed or validated."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        keys: Optional[Sequence[str]] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ):
        self.keys = list(keys or [])
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({"keys": self.keys, "line": self.line, "column": self.column})
        return data
