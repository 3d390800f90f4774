"""Exception types shared across the package."""


class TextFaceError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TextFaceError, ValueError):
    """Input data violates a structural constraint (bad index, bad shape)."""


class SchemaError(TextFaceError, ValueError):
    """A record refers to an unknown attribute or option."""


class MeshParseError(TextFaceError, ValueError):
    """A mesh file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AmbiguityError(TextFaceError, ValueError):
    """A text mentions one attribute with contradictory options."""

    def __init__(self, attribute, phrases):
        self.attribute = attribute
        self.phrases = list(phrases)
        super().__init__(
            f"contradictory mentions of '{attribute}': " + " vs ".join(self.phrases)
        )


class TrainingDivergedError(TextFaceError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        super().__init__(message)


class NumericalError(TextFaceError, RuntimeError):
    """An iterative solver failed to converge."""


class ArchiveError(TextFaceError, ValueError):
    """A model archive is missing, malformed, or version-incompatible."""
