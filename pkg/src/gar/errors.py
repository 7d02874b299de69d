"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GarError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GarError, ValueError):
    pass


class CorruptSlicesError(GarError, ValueError):
    pass


class EmptySliceError(GarError, ValueError):
    pass


class MissingVerdictError(GarError, ValueError):
    pass


class NoSlicesError(GarError, ValueError):
    pass


class EmptyBatchError(GarError, ValueError):
    pass


class GroupTooSmallError(GarError, ValueError):
    pass


class NumericalError(GarError, ArithmeticError):
    pass


class ImbalanceError(GarError, ValueError):
    pass


class NoTokensError(GarError, ValueError):
    pass


class ParseError(GarError, ValueError):
    """Malformed input record; ``line`` is 1-based when the source is a file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GatewayError(GarError):
    """Failure talking to a generation service."""


class RateLimited(GatewayError):
    pass


class ProtocolError(GatewayError):
    pass


class RequestRejected(GatewayError):
    """Non-retryable client error status (4xx other than rate limiting)."""


class Unavailable(GatewayError):
    pass
