"""Exception types raised across the library.

Every error carries enough context in its message to identify the offending
row, node, or request without a debugger.
"""

from __future__ import annotations


class GridArbError(Exception):
    """Base class for all library errors."""


# --- network loading / admittance construction ---

class MissingSlack(GridArbError):
    pass


class MultipleSlack(GridArbError):
    pass


class DisconnectedGraph(GridArbError):
    pass


class DuplicateLine(GridArbError):
    pass


class MalformedRow(GridArbError):
    pass


class SingularPartition(GridArbError):
    pass


# --- power flow ---

class NotConverged(GridArbError):
    """Solver hit the iteration cap before meeting tolerance.

    Carries the best iterate so callers (e.g. a training loop) can keep
    going with a degraded-but-usable solution.

    Attributes:
        solution: best PowerFlowSolution reached (residual above tolerance).
        residual: its power-mismatch infinity norm.
        index: position within a batch, or None for single solves.
    """

    def __init__(self, message, solution=None, residual=None, index=None):
        super().__init__(message)
        self.solution = solution
        self.residual = residual
        self.index = index


# --- time-series data ---

class UnknownColumnKind(GridArbError):
    pass


class IrregularTimestamps(GridArbError):
    pass


class EmptyFile(GridArbError):
    pass


class BoundaryOutOfRange(GridArbError):
    pass


class BoundaryNotDayAligned(GridArbError):
    pass


class IndexOutOfRange(GridArbError, IndexError):
    pass


class TimestampNotFound(GridArbError, KeyError):
    pass


# --- augmentation ---

class TooFewSamples(GridArbError):
    pass


class UOutOfRange(GridArbError):
    pass


class NotEnoughRows(GridArbError):
    pass


# --- environment / benchmark ---

class EpisodeFinished(GridArbError):
    pass


class DimensionMismatch(GridArbError):
    pass


class BudgetExceeded(GridArbError):
    pass


class ZeroOptimalCost(GridArbError):
    pass


# --- wire protocol ---

class ProtocolViolation(GridArbError):
    pass


class ActionDimensionMismatch(GridArbError):
    pass
