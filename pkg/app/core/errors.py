"""Exception hierarchy shared by every service."""


class DdpgError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(DdpgError, ValueError):
    """Shapes or dimensions do not chain."""


class PreconditionError(DdpgError, ValueError):
    """An operation was called on inputs it does not accept (empty buffer, empty class...)."""


class NumericalError(DdpgError, ArithmeticError):
    """Non-finite values or a solver that failed to converge."""


class ConfigError(DdpgError):
    """Unknown names, unknown keys or invalid configuration values."""
