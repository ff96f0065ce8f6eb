"""Exception hierarchy shared by every module."""


class BeliefError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(BeliefError, ValueError):
    """Input violates a declared schema (duplicate label, missing field, ...)."""


class CapacityError(BeliefError, ValueError):
    """Input exceeds a fixed capacity (frame size, oracle size)."""


class FrameLookupError(BeliefError, KeyError):
    """A label or index does not belong to the frame."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable.
        return str(self.args[0]) if self.args else ""


class UsageError(BeliefError, ValueError):
    """An operation was called with arguments that break its preconditions."""


class TotalConflictError(BeliefError, ArithmeticError):
    """Dempster normalization constant vanished."""


class ConfigurationError(BeliefError, ValueError):
    """A score map, threshold set or run configuration is invalid."""


class ParseError(BeliefError, ValueError):
    """Malformed JSON or JSONL input.

    ``location`` is a human readable position such as ``"line 3, column 7"``.
    """

    def __init__(self, message: str, location: str | None = None) -> None:
        self.location = location
        super().__init__(f"{message} ({location})" if location else message)


class ClientError(BeliefError, RuntimeError):
    """A model or retrieval client failed to produce a response."""
