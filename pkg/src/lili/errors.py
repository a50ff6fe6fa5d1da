"""Exception hierarchy shared by all lili modules.

Two broad families matter for the CLI exit-code contract: DataError covers
malformed or inconsistent user-supplied artifacts (exit code 2), everything
else under LiliError is a runtime failure (exit code 3).
"""


class LiliError(Exception):
    """Base class for all lili errors."""


class DataError(LiliError):
    """Invalid, malformed, or inconsistent data or file content."""


# oracle
class OperandOutOfRange(DataError):
    pass


class NegativeResult(DataError):
    pass


class WidthOverflow(DataError):
    pass


# codec
class DecodeError(DataError):
    """Base for decoding failures; carries per-cell reads when available."""

    def __init__(self, msg, cells=None):
        super().__init__(msg)
        self.cells = cells


class BlankAfterDigit(DecodeError):
    pass


class EmptyField(DecodeError):
    pass


# datagen
class RequestExceedsPairSpace(DataError):
    pass


class BadMagic(DataError):
    pass


class BadHeader(DataError):
    pass


class MalformedRecord(DataError):
    pass


class SplitOverlapDetected(DataError):
    pass


# nn / models
class ShapeMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class MissingCarrySplit(DataError):
    pass


# harness
class IncomparableReports(DataError):
    pass
