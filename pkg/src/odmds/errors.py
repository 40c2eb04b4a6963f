"""Exception hierarchy. The CLI maps each family to an exit code."""


class OdmdsError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class UsageError(OdmdsError):
    exit_code = 1


class DataError(OdmdsError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class ProviderError(OdmdsError):
    """Transport or protocol failure talking to an external service."""

    exit_code = 3


class EmbeddingError(ProviderError):
    pass


class LlmError(ProviderError):
    pass
