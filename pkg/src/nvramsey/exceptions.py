"""Exception hierarchy shared by all nvramsey modules."""


class NVRamseyError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(NVRamseyError, ValueError):
    """An input value is outside its documented domain."""


class NumericError(NVRamseyError, ArithmeticError):
    """An internal numeric result violated a guaranteed property."""


class CalibrationError(NVRamseyError):
    """A calibration search did not find an acceptable operating point."""


class TimingViolationError(NVRamseyError):
    """The requested pulse sequence does not fit the camera cycle."""

    def __init__(self, message, deficit=None):
        super().__init__(message)
        self.deficit = deficit


class FileFormatError(NVRamseyError, ValueError):
    """A binary map or series file could not be parsed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeMismatchError(InvalidArgumentError):
    """Array dimensions disagree with what the caller configured."""

    def __init__(self, what, expected, actual):
        super().__init__(
            f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)


class ConfigError(NVRamseyError, ValueError):
    """An experiment configuration failed schema validation."""
