"""Core module - domain models, errors and the calibration problem."""

from seqcal.core.errors import (
    ConfigError,
    DesignAborted,
    GpFitError,
    InfeasibleTargetError,
    MissingBaselineError,
    SeqcalError,
    SimulatorError,
    TraceSchemaError,
)
from seqcal.core.models import (
    AcquisitionKind,
    AcquisitionSpec,
    DesignTrace,
    EngineConfig,
    FitConfig,
    KernelParams,
    ParameterSpace,
    Sample,
    SeedTriple,
)
from seqcal.core.problem import CalibrationProblem, sample_uniform

__all__ = [
    "AcquisitionKind",
    "AcquisitionSpec",
    "CalibrationProblem",
    "ConfigError",
    "DesignAborted",
    "DesignTrace",
    "EngineConfig",
    "FitConfig",
    "GpFitError",
    "InfeasibleTargetError",
    "KernelParams",
    "MissingBaselineError",
    "ParameterSpace",
    "Sample",
    "SeedTriple",
    "SeqcalError",
    "SimulatorError",
    "TraceSchemaError",
    "sample_uniform",
]
