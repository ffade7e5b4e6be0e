"""Exception hierarchy shared by all modules."""


class LLPError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(LLPError, ValueError):
    """A model or agent parameter is outside its admissible range."""


class DomainError(LLPError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(LLPError):
    """Not enough observations to compute the requested statistic."""


class EnvironmentOverflowError(LLPError):
    """The sparse environment table grew beyond its configured cap."""


class ConfigError(LLPError, ValueError):
    """A configuration document failed to parse or validate."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
