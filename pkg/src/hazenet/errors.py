"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage/config problems exit with 2,
data and file-format problems with 3, numerical failures with 4.
"""


class HazeError(Exception):
    exit_code = 1


class UsageError(HazeError):
    exit_code = 2


class ParameterError(HazeError, ValueError):
    exit_code = 2


class DimensionError(HazeError, ValueError):
    """Raised when tensor extents are inconsistent with an operation."""

    exit_code = 2

    def __init__(self, message, expected=None, got=None):
        self.expected = expected
        self.got = got
        if expected is not None or got is not None:
            message = f"{message} (expected {expected}, got {got})"
        super().__init__(message)


class FormatError(HazeError):
    exit_code = 3


class ParseError(FormatError):
    """Malformed file contents; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class NumericalError(HazeError):
    exit_code = 4
