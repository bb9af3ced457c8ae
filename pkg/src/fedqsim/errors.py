"""Exception taxonomy shared across the package.

Five failure classes are distinguished: configuration errors (bad config
values or incongruent shapes), data errors (malformed or out-of-range input
data), argument errors (plain ``ValueError`` on bad call arguments),
encoding/decoding errors (compression boundary), and internal errors
(``AssertionError`` / ``RuntimeError`` for states that indicate a bug).
"""

from __future__ import annotations


class FedqsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(FedqsimError):
    """A config value violates a stated constraint.

    Messages name the offending field and the constraint, e.g.
    ``"federation.queue_length: 3 does not divide clients_per_round=100"``.
    """


class DataError(FedqsimError):
    """Input data is malformed or out of the documented domain."""


class EncodingError(FedqsimError):
    """Raised when a tensor cannot be represented in the compressed format."""


class DecodingError(FedqsimError):
    """Raised when a compressed payload cannot be decoded.

    ``byte_offset`` locates the failure within the payload when known.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset
