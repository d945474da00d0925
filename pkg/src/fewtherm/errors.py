"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it and can be
rendered as the machine-readable JSON envelope written on failure.
"""

from __future__ import annotations

from typing import TYPE_CHECKING
from typing import Any

if TYPE_CHECKING:
    from .dynamics import EnsembleResult
    from .dynamics import Trajectory
    from .phase_model import PhaseState

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4


class FewthermError(Exception):
    """Base class for all errors raised by fewtherm."""

    exit_code: int = EXIT_NUMERICAL

    def details(self) -> dict[str, Any]:
        """Extra fields for the JSON envelope."""
        return {}

    def to_json(self) -> dict[str, Any]:
        """Return the machine-readable error envelope."""
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code, **self.details()}


class ContractError(FewthermError, ValueError):
    """Inputs violate a documented precondition (dimensions, windows, sweep length)."""


class ParameterLookupError(FewthermError, KeyError):
    """An external parameter name is not defined by the model."""

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class DomainError(FewthermError, ValueError):
    """An energy lies outside the domain of a β family."""


class SingularityError(FewthermError, ArithmeticError):
    """The constraint gradient P is degenerate (P·P below threshold)."""

    def __init__(self, message: str, state: PhaseState | None = None, step: int | None = None):  # noqa: D107
        super().__init__(message)
        self.state = state
        self.step = step

    def details(self) -> dict[str, Any]:  # noqa: D102
        out: dict[str, Any] = {}
        if self.step is not None:
            out["step"] = self.step
        if self.state is not None:
            out["state"] = {"t": self.state.t, "q": self.state.q.tolist(), "p": self.state.p.tolist()}
        return out


class ProjectionError(FewthermError, ArithmeticError):
    """Newton projection onto the constraint hypersurface did not converge."""


class DivergenceError(FewthermError, ArithmeticError):
    """A phase-space integral does not converge without an energy window."""


class EntropyBranchError(FewthermError, ValueError):
    """The density is not monotone in H over the requested window."""


class ConfigError(FewthermError, ValueError):
    """A run configuration could not be parsed or failed validation."""

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field: str | None = None, line: int | None = None):  # noqa: D107
        super().__init__(message)
        self.field = field
        self.line = line

    def details(self) -> dict[str, Any]:  # noqa: D102
        out: dict[str, Any] = {}
        if self.field is not None:
            out["field"] = self.field
        if self.line is not None:
            out["line"] = self.line
        return out


class TrajectoryError(FewthermError):
    """A trajectory stopped early; the samples recorded so far are attached."""

    def __init__(  # noqa: D107
        self,
        message: str,
        partial: Trajectory,
        cause: FewthermError,
        completed: EnsembleResult | None = None,
        index: int | None = None,
        step: int | None = None,
    ):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
        self.completed = completed
        self.index = index
        self.step = step
        self.exit_code = cause.exit_code

    def details(self) -> dict[str, Any]:  # noqa: D102
        out: dict[str, Any] = {"recorded_samples": len(self.partial), "cause": self.cause.to_json()}
        if self.index is not None:
            out["trajectory"] = self.index
        if self.step is not None:
            out["step"] = self.step
        if self.completed is not None:
            out["completed_trajectories"] = len(self.completed.trajectories)
        return out


class SamplingError(FewthermError, RuntimeError):
    """A rejection sampler fell below its acceptance-rate floor."""
