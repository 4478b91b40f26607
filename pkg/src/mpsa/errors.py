"""Exception hierarchy shared by every module."""


class MpsaError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MpsaError, ValueError):
    """Invalid argument or data handed to a public function."""


class DegenerateWeightsError(InputError):
    """Weights sum to zero, so no weighted statistic is defined."""


class ConfigError(InputError):
    """Invalid run configuration. ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ParseError(InputError):
    """Malformed file or document. ``location`` is a line, byte offset or key path."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class NumericalError(MpsaError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite values, ...)."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
