"""Exception types shared across the package."""


class DemandRecError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(DemandRecError):
    """Malformed or inconsistent input data."""


class ConfigError(DemandRecError):
    """Invalid configuration value or unknown key."""


class SolverError(DemandRecError):
    """Numerical failure inside the solver (divergence, bad step size)."""


class ModelFileError(DemandRecError):
    """Unreadable, corrupt, or incompatible model file."""
