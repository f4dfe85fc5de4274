"""Exception hierarchy shared by every module."""


class SubsparseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SubsparseError, ValueError):
    pass


class DimensionError(SubsparseError, ValueError):
    """Requested construction is impossible in the given ambient dimension."""


class RankDeficient(SubsparseError, ValueError):
    pass


class EmptyInput(SubsparseError, ValueError):
    pass


class PointsOutsideSubspace(SubsparseError, ValueError):
    pass


class MethodUnavailable(SubsparseError, ValueError):
    pass


class InfeasibleProblem(SubsparseError):
    """Equality constraint cannot be met: the target is not in range(X)."""


class ZeroInradius(SubsparseError, ValueError):
    pass


class NecessaryConditionViolated(SubsparseError):
    """Some subspace has ``inradius <= incoherence + noise_level``.

    ``beta`` is undefined in that regime, and no recovery guarantee applies.
    """

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins


class ParameterError(SubsparseError, ValueError):
    pass


class HypothesisNotMet(SubsparseError):
    pass


class FormatError(SubsparseError, ValueError):
    """Malformed matrix/dataset file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SubsparseError, ValueError):
    pass
