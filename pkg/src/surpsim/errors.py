"""Exception hierarchy shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
BackendError (and subclasses) -> 4.
"""


class SurpsimError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SurpsimError):
    """Invalid or incomplete run configuration."""


class DataError(SurpsimError):
    """Malformed input data: datasets, corpora, embeddings, caches."""


class BackendError(SurpsimError):
    """Language-model backend failure."""


class TransportError(BackendError):
    """Remote backend unreachable, HTTP-level failure, or unparseable body."""


class ProtocolError(BackendError):
    """Remote payload parsed but failed validation against the wire contract."""


class UnsupportedModeError(SurpsimError):
    """Closed-form evaluation requested for a measure that has none."""
