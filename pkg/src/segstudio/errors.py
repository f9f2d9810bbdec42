"""Exception taxonomy shared by every segstudio module.

Each error carries a stable ``code`` string; the HTTP layer maps codes 1:1
onto wire-level error bodies.
"""


class SegStudioError(Exception):
    """Base class for all errors raised by this package."""

    code = "internal"

    def __init__(self, message: str, detail: object = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class ArgumentError(SegStudioError):
    code = "bad_argument"


class BoundsError(SegStudioError):
    code = "out_of_bounds"


class CodecError(SegStudioError):
    code = "codec"


class ParseError(SegStudioError):
    code = "parse"


class MixedSeriesError(ParseError):
    code = "mixed_series"


class UnsupportedError(SegStudioError):
    code = "unsupported"


class GeometryError(SegStudioError):
    code = "geometry"


class GridMismatchError(SegStudioError):
    code = "grid_mismatch"


class SeriesMismatchError(SegStudioError):
    code = "series_mismatch"


class NotFoundError(SegStudioError):
    code = "not_found"


class ConflictError(SegStudioError):
    code = "conflict"


class AuthError(SegStudioError):
    code = "unauthorized"


class BusyError(SegStudioError):
    code = "busy"


class IntegrityError(SegStudioError):
    code = "integrity"


class StartupError(SegStudioError):
    code = "startup"
