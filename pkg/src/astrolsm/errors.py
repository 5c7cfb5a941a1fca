"""Exception types shared across the package."""


class AstrolsmError(Exception):
    """Base class for all package errors."""


class ConfigError(AstrolsmError):
    """A parameter value is outside its permitted range."""


class StructureError(AstrolsmError):
    """A network structure request cannot be satisfied (bad dims, bad index)."""


class FormatError(AstrolsmError):
    """A data file does not conform to its binary format."""


class NumericalError(AstrolsmError):
    """Simulation or training state became non-finite."""


class FitError(AstrolsmError):
    """A least-squares fit is under-determined or rank-deficient."""
