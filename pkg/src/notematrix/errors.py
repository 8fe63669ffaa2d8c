"""Exception types shared across the package.

Everything derives from :class:`NoteMatrixError` so callers (the CLI in
particular) can map data problems to a single exit code.
"""


class NoteMatrixError(Exception):
    """Base class for all package errors."""


class FormatError(NoteMatrixError, ValueError):
    """Bad magic, unknown version or otherwise malformed file content."""


class TruncationError(FormatError):
    """Input ended before a declared chunk or field was complete."""


class UnsupportedEncodingError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


class MalformedVLQError(FormatError):
    pass


class InvalidLengthError(NoteMatrixError, ValueError):
    pass


class InvalidContextError(NoteMatrixError, ValueError):
    pass


class ShapeError(NoteMatrixError, ValueError):
    pass


class RangeError(NoteMatrixError, ValueError):
    pass


class EmptyInputError(NoteMatrixError, ValueError):
    pass


class ConfigError(NoteMatrixError, ValueError):
    pass


class InvalidOpError(NoteMatrixError, ValueError):
    pass


class UndefinedSNRError(NoteMatrixError, ValueError):
    """Finite SNR requested for a clip with zero signal power."""


class UnsupportedDivisionError(UnsupportedFormatError):
    """SMPTE (negative) time division."""
