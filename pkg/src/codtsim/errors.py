"""Error classes mapped onto CLI exit codes."""


class CodtsimError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ConfigError(CodtsimError):
    """Configuration file or override does not validate (exit code 2)."""

    exit_code = 2


class DomainError(CodtsimError):
    """Inputs are outside the physically reachable domain (exit code 3)."""

    exit_code = 3


class ModelValidityError(CodtsimError):
    """Requested point lies outside the validity of the paraxial model (exit code 4)."""

    exit_code = 4
