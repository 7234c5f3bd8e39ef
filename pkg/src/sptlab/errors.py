"""Exception types shared across the package."""


class SptError(Exception):
    """Base class for all package errors."""


class ConfigError(SptError):
    """Invalid configuration or parameter values (caught before any computation)."""


class DomainError(SptError):
    """Inputs outside an operation's mathematical domain."""


class SimulationError(SptError):
    """Runtime failure while generating a market path."""


class DataError(SptError):
    """Malformed or inconsistent market data."""
