"""Exception hierarchy shared by all modules."""


class MCDMError(Exception):
    """Base class for every error raised by this package."""


# linalg
class NotPositiveDefinite(MCDMError, ValueError):
    pass


class NotSymmetric(MCDMError, ValueError):
    pass


class ConvergenceFailure(MCDMError, RuntimeError):
    pass


class RankOutOfRange(MCDMError, ValueError):
    pass


# design
class DesignError(MCDMError, ValueError):
    pass


class EmptyTermSet(DesignError):
    pass


class TermOutOfRange(DesignError):
    pass


class RankDeficient(DesignError):
    pass


class ZeroVariance(DesignError):
    pass


class HierarchyViolation(DesignError):
    pass


# model / fitter
class DimensionMismatch(MCDMError, ValueError):
    pass


class ProbabilityUnderflow(MCDMError, FloatingPointError):
    pass


class SingularNormalEquations(MCDMError, ValueError):
    pass


class Diverged(MCDMError, RuntimeError):
    pass


class UnidentifiableMask(MCDMError, ValueError):
    pass


# interpret / select
class TargetNotInModel(MCDMError, ValueError):
    pass


class InvalidLevel(MCDMError, ValueError):
    pass


# cli
class ParseError(MCDMError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class UnknownLabel(ParseError):
    pass
