"""Exception hierarchy shared by all layers."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from seqcal.core.models import DesignTrace


class SeqcalError(Exception):
    """Base class for all seqcal failures."""


class ConfigError(SeqcalError):
    """Invalid configuration or command-line input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SimulatorError(SeqcalError):
    """The simulator raised or returned a non-finite output."""

    def __init__(self, message: str, theta: list[float] | None = None):
        self.theta = theta
        super().__init__(message)


class GpFitError(SeqcalError):
    """No hyperparameter start produced a positive definite kernel matrix."""


class InfeasibleTargetError(SeqcalError):
    """A progress curve never reaches the requested accuracy."""


class MissingBaselineError(SeqcalError):
    """Speedup requested for a batch size without a baseline configuration."""


class TraceSchemaError(ConfigError):
    """A trace file, or a set of traces, does not have the expected layout."""


class DesignAborted(SeqcalError):
    """A design run stopped early; the partial trace is attached."""

    def __init__(self, message: str, trace: DesignTrace):
        self.trace = trace
        super().__init__(message)
