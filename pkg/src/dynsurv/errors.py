"""Exception hierarchy."""


class DynSurvError(Exception):
    """Base class for all package errors."""


class DomainError(DynSurvError, ValueError):
    """Argument outside the support or admissible parameter region."""


class DataError(DynSurvError, ValueError):
    """Malformed or inconsistent survival data."""


class NumericalError(DynSurvError, ArithmeticError):
    """A sampler step produced non-finite or invalid numbers."""

    def __init__(self, message: str, *, module: str | None = None, iteration: int | None = None):
        self.module = module
        self.iteration = iteration
        prefix = []
        if module is not None:
            prefix.append(f"[{module}]")
        if iteration is not None:
            prefix.append(f"iteration {iteration}:")
        super().__init__(" ".join(prefix + [message]))


class ConfigError(DynSurvError, ValueError):
    """Invalid run specification."""
