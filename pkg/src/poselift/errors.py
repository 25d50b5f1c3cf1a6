"""Exception types shared across the package.

The CLI maps each family to its own exit code, so raise the most specific
one that applies.
"""


class PoseliftError(Exception):
    """Base class for all package errors."""


class ShapeError(PoseliftError, ValueError):
    """Operands of a differentiable op have incompatible shapes."""


class ConfigError(PoseliftError, ValueError):
    """Invalid configuration, schema or command-line override."""


class DataError(PoseliftError, ValueError):
    """Malformed or inconsistent pose data."""


class ParseError(DataError):
    """A pose or schema file could not be parsed.

    ``line`` is the 1-based line number of the offending record, or None when
    the problem is not tied to a single line.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DegeneratePoseError(DataError):
    """All joints coincide with the central joint, so no scale exists."""


class AlignmentError(DataError):
    """Scale alignment is undefined because the prediction has zero norm."""


class TrainingError(PoseliftError, RuntimeError):
    """A non-finite loss or gradient appeared during training.

    ``diagnostics`` carries whatever state the raiser thought useful for a
    post-mortem (losses, iteration, offending parameter names).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
