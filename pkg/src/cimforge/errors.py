"""Exception hierarchy shared by all simulator modules."""


class CimError(Exception):
    """Base class for simulator errors."""


class DomainError(CimError, ValueError):
    """An argument lies outside the domain of an operation."""


class PhaseError(CimError, RuntimeError):
    """An AMU operation was invoked out of phase order."""


class ConfigError(CimError, ValueError):
    """A configuration value is unsupported or inconsistent."""


class InvariantError(CimError, AssertionError):
    """An internal invariant was violated."""
