"""Exception types shared across the package."""


class StreamDagError(Exception):
    """Base class for all streamdag errors."""


class InvalidActionError(StreamDagError):
    """Action vector has the wrong length or non-finite entries."""


class CyclicGraphError(StreamDagError):
    """Operation requires an acyclic graph but received a cyclic one."""


class DimensionMismatchError(StreamDagError):
    """Inputs that must share a dimension do not."""


class InsufficientDataError(StreamDagError):
    """Too few observations for the requested computation."""


class SchemaError(StreamDagError):
    """Malformed stream or results input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(StreamDagError):
    """Invalid configuration value."""


class GenerationError(StreamDagError):
    """Synthetic generation could not satisfy its constraints."""
