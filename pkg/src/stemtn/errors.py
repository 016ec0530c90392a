"""Exception hierarchy shared by all stemtn modules."""


class StemTNError(Exception):
    """Base class for every error raised by this package."""


# networks


class MalformedNetwork(StemTNError, ValueError):
    pass


class CapExceeded(StemTNError, ValueError):
    pass


class OpenEdgeSliced(StemTNError, ValueError):
    pass


class IndexOutOfRange(StemTNError, IndexError):
    pass


# circuits


class MissingParams(StemTNError, ValueError):
    pass


class CircuitSyntaxError(StemTNError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InvariantViolation(StemTNError, ValueError):
    def __init__(self, message, qubit=None, cycle=None):
        self.qubit = qubit
        self.cycle = cycle
        super().__init__(message)


class QubitCoverage(StemTNError, ValueError):
    pass


class LayoutTooSmall(StemTNError, ValueError):
    pass


# trees and schemes


class EdgeNotFound(StemTNError, KeyError):
    pass


class SchemaError(StemTNError, ValueError):
    pass


class HashMismatch(SchemaError):
    pass


# planner


class Infeasible(StemTNError, ValueError):
    pass


class Stuck(StemTNError, RuntimeError):
    """Dynamic slicing cannot reach the width target.

    ``scheme`` holds the best scheme found and ``cw`` its width.
    """

    def __init__(self, message, scheme=None, cw=None):
        self.scheme = scheme
        self.cw = cw
        super().__init__(message)


# runtime


class WidthExceedsBudget(StemTNError, ValueError):
    pass


class CacheMismatch(StemTNError, ValueError):
    pass


class SubtaskFailure(StemTNError, RuntimeError):
    def __init__(self, message, assignment=None):
        self.assignment = assignment
        super().__init__(message)


# sampling


class EmptySamples(StemTNError, ValueError):
    pass


# work queue


class QueueError(StemTNError, RuntimeError):
    pass


class MissingResult(QueueError):
    pass


class ChecksumMismatch(QueueError):
    def __init__(self, message, task_id=None):
        self.task_id = task_id
        super().__init__(message)
