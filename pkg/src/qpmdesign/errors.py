"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class QpmError(Exception):
    exit_code = 3


class ConfigError(QpmError, ValueError):
    """Invalid configuration, out-of-window wavelength, inadmissible profile."""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain where a quantity is defined."""


class NumericalError(QpmError, ArithmeticError):
    """Solver failure, divergence, NaN gradients."""

    exit_code = 3


class ProfileFormatError(QpmError):
    """Malformed profile CSV or sidecar."""

    exit_code = 4
