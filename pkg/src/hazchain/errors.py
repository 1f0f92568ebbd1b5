"""Exception hierarchy.  The CLI maps each family to an exit code."""


class HazchainError(Exception):
    exit_code = 1


class ConfigError(HazchainError, ValueError):
    """Bad input file, unknown name, missing required setting."""

    exit_code = 2


class FormatError(ConfigError):
    """Malformed frame log."""


class ValidationError(HazchainError, ValueError):
    """Model parameters or chain structure violate an invariant."""

    exit_code = 3


class ModelError(ValidationError):
    """Chain cannot be simulated (e.g. a live state with no exits)."""


class SolverError(HazchainError, RuntimeError):
    exit_code = 4


class CalibrationError(SolverError):
    pass
