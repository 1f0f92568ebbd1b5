"""Stochastic safety model of an automated vehicle crossing intersections."""

from hazchain.errors import (
    CalibrationError,
    ConfigError,
    FormatError,
    HazchainError,
    ModelError,
    SolverError,
    ValidationError,
)
from hazchain.model import (
    AccidentClass,
    BrakingFlag,
    Ctmc,
    FlatState,
    HazardParams,
    HighLevelState,
    ModelConfig,
    RateTable,
    RoadCondition,
    SpeedBand,
    SubState,
    build_ctmc,
    enumerate_states,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AccidentClass",
    "BrakingFlag",
    "CalibrationError",
    "ConfigError",
    "Ctmc",
    "FlatState",
    "FormatError",
    "HazardParams",
    "HazchainError",
    "HighLevelState",
    "ModelConfig",
    "ModelError",
    "RateTable",
    "RoadCondition",
    "SolverError",
    "SpeedBand",
    "SubState",
    "ValidationError",
    "build_ctmc",
    "enumerate_states",
    "validate",
]
