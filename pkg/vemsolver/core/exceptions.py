"""
Exception hierarchy.

Every error raised by the solver derives from VemError.
"""

from typing import Any, Dict, List, Optional


class VemError(Exception):
    """Base class for all solver errors."""


class InvalidGridError(VemError, ValueError):
    """Raised when a time grid cannot be built from the given interval."""


class DimensionError(VemError, ValueError):
    """Raised when array shapes disagree with the grid or the problem."""


class EvaluationError(VemError):
    """
    Raised when a problem callable returns non-finite values.

    Attributes:
        node (Optional[int]): Grid node where the failure was detected.
        tau (Optional[float]): Variation time of the failing evaluation.
        sample (Optional[str]): Description of the sample point, if any.
    """

    def __init__(
        self,
        message: str,
        node: Optional[int] = None,
        tau: Optional[float] = None,
        sample: Optional[str] = None,
    ):
        self.node = node
        self.tau = tau
        self.sample = sample
        super().__init__(message)

    def __str__(self) -> str:
        parts = [super().__str__()]
        if self.node is not None:
            parts.append(f"node={self.node}")
        if self.tau is not None:
            parts.append(f"tau={self.tau:.6g}")
        if self.sample is not None:
            parts.append(f"sample={self.sample}")
        return " ".join(parts)

    def with_tau(self, tau: float) -> "EvaluationError":
        """Return a copy of the error carrying the variation time."""
        return EvaluationError(self.args[0], node=self.node, tau=tau, sample=self.sample)


class UsageError(VemError):
    """Raised when an operation is called in a context it does not support."""


class StiffnessSuspectedError(VemError):
    """Raised when the explicit step size collapses."""


class IntegrationError(VemError):
    """Raised when the implicit stepper cannot complete a step."""


class DescentViolationError(VemError):
    """
    Raised when the monitored functional rises during a solve.

    Attributes:
        dump (List[Dict[str, Any]]): Diagnostics collected up to the abort.
    """

    def __init__(self, message: str, dump: Optional[List[Dict[str, Any]]] = None):
        self.dump = dump or []
        super().__init__(message)


class UnknownCaseError(VemError, KeyError):
    """Raised when a benchmark case name is not registered."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown case"


class ConfigError(VemError):
    """Raised when a configuration file or option set is invalid."""
