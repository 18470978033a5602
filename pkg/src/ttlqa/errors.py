"""Exception hierarchy shared across the package.

Two broad families matter to callers (and to the CLI exit-code mapping):
``UsageError`` for unusable inputs/configuration, ``DataError`` for content
that parsed but is malformed or empty.
"""


class TTLQAError(Exception):
    """Base class for all package errors."""


class UsageError(TTLQAError):
    """Missing files, unknown config keys, bad flag combinations."""


class DataError(TTLQAError):
    """Structurally readable input whose content is invalid or unusable."""


class ParseError(DataError):
    """A file does not match its declared format; message names the element."""


class ValidationError(DataError):
    """A value violates a documented invariant; message lists violations."""


class NoTrainablePairsError(DataError):
    """Question generation produced zero usable pairs for a context."""
