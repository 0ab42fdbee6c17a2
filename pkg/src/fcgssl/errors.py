"""Exception hierarchy shared across the package.

The CLI maps :class:`ConfigError` to exit code 1 and every other
:class:`FCGError` to exit code 2.
"""


class FCGError(Exception):
    """Base class for all package errors."""


class ConfigError(FCGError, ValueError):
    """Invalid configuration value or unknown key."""


class GraphFormatError(FCGError, ValueError):
    """Malformed graph input (bad line, bounds, shape, self-loop, duplicate)."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ShapeError(FCGError, ValueError):
    pass


class SpectralError(FCGError, RuntimeError):
    """Eigensolver failed to reach the requested residual."""

    def __init__(self, message, worst_residual=float("nan")):
        self.worst_residual = worst_residual
        super().__init__(f"{message} (worst residual {worst_residual:.3e})")


class NumericalError(FCGError, FloatingPointError):
    """NaN/inf produced by a differentiable op."""


class TrainingError(FCGError, RuntimeError):
    pass


class CheckpointError(FCGError, IOError):
    pass
