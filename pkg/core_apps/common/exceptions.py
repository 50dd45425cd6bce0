"""
Exception hierarchy shared by every app.

Each exception carries the process exit code the management commands
return when it escapes a command:

- 2: validation error (bad option, bad config, shape mismatch)
- 3: numeric divergence (NaN / inf loss)
- 4: I/O or file format error
"""


class BicaError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ValidationFailure(BicaError):
    """Invalid option, config value or input."""

    exit_code = 2


class ShapeError(ValidationFailure, ValueError):
    """Tensor shapes do not conform to an operation's contract."""


class ConfigMismatchError(ValidationFailure):
    """A checkpoint was written with a different configuration."""


class SceneGenerationError(ValidationFailure):
    """Object placement failed within the rejection-sampling budget."""


class DivergenceError(BicaError):
    """A forward pass or loss produced a non-finite value."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FormatError(BicaError):
    """A dataset, vocabulary or checkpoint file is corrupt."""

    exit_code = 4


class FormatVersionError(FormatError):
    """A file was written with an unsupported format version."""
