"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line tool:
3 for bad input, 4 for domain failures (singularities, degenerate geometry).
"""


class KineflowError(Exception):
    exit_code = 3


class InvalidInputError(KineflowError, ValueError):
    pass


class InvalidDimensionError(InvalidInputError):
    pass


class DegreeError(InvalidInputError):
    """Form degree out of range (overflow above n or underflow below 0)."""


class MissingDataError(InvalidInputError):
    pass


class InvalidMethodError(InvalidInputError):
    pass


class NumericError(KineflowError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericError):
    pass


class DomainError(KineflowError):
    exit_code = 4


class RankDeficientError(DomainError):
    pass


class NoMotionError(DomainError):
    pass


class DegenerateHullError(DomainError):
    pass


class AmbiguousTrackError(DomainError):
    pass


class SingularityError(DomainError):
    pass


class CollinearError(DomainError):
    pass


class InfiniteMassError(DomainError):
    def __init__(self, vertex: int, message: str | None = None):
        self.vertex = vertex
        super().__init__(message or f"vertex {vertex} coincides with the orthocenter")


class AmbiguousAxisError(DomainError):
    pass


class CheiralityError(DomainError):
    pass


class PartialSequenceError(DomainError):
    def __init__(self, frame: int, message: str | None = None):
        self.frame = frame
        super().__init__(message or f"visibility lost at frame {frame}")
