"""cohwit.errors

The errors raised by the toolkit. Every error knows the exit code the
command line should terminate with.
"""


class CohwitError(Exception):
    exit_code = 1


class InvalidParameter(CohwitError, ValueError):
    """A physical parameter is outside its allowed range."""

    exit_code = 2


class ConfigError(CohwitError):
    """The run configuration could not be validated."""

    exit_code = 2

    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.message = message
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{where}: {message}")


class InstabilityError(CohwitError):
    exit_code = 3


class ResolutionError(CohwitError):
    """The grid cannot resolve the requested vibrational states."""

    exit_code = 4


class TruncationError(CohwitError):
    """The sum-over-states basis is not converged."""

    exit_code = 4


class RangeError(CohwitError, ValueError):
    pass


class WindowError(CohwitError, ValueError):
    pass


class EmptySpectrum(CohwitError, ValueError):
    pass


class SamplingError(CohwitError, ValueError):
    pass
