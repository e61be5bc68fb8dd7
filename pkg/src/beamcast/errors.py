"""Exception types shared across the package."""


class BeamcastError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(BeamcastError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(BeamcastError, ValueError):
    """A configuration value is missing, unknown, or out of range."""


class ValidationError(BeamcastError, ValueError):
    """Data violates an invariant (bad bbox, inconsistent label, ...)."""


class ParseError(BeamcastError, ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(BeamcastError, ValueError):
    """A checkpoint file is malformed or does not match the model."""
