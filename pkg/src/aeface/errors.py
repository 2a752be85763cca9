"""Exception hierarchy shared across the package.

Each class maps onto one CLI exit code (see ``aeface.cli``).
"""


class AefaceError(Exception):
    pass


class ConfigError(AefaceError, ValueError):
    pass


class ShapeError(AefaceError, ValueError):
    pass


class NumericError(AefaceError, ArithmeticError):
    pass


class DataError(AefaceError, ValueError):
    pass


class FormatError(DataError):
    """Malformed input file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ModelError(AefaceError):
    pass


class ProtocolError(AefaceError, ValueError):
    pass
