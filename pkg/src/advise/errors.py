"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
NumericalError -> 3, RunnerTimeout / RunnerError -> 4.
"""


class AdviseError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(AdviseError, ValueError):
    """Malformed input: bad bundle, bad flag value, schema violation."""


class NumericalError(AdviseError, ArithmeticError):
    """A numerical routine produced or received unusable values."""


class ZeroVarianceError(NumericalError):
    """Sample range below the degeneracy threshold; no density exists."""


class RunnerError(AdviseError, RuntimeError):
    """The model runner failed or returned a malformed response."""


class RunnerTimeout(RunnerError):
    """The model runner exceeded its time budget."""
