"""Exception hierarchy shared by every module of the package."""


class DrccError(Exception):
    """Base class for all package errors."""


class DegenerateMoments(DrccError, ValueError):
    """The centered covariance is not positive definite."""


class Assumption1Violated(DrccError, ValueError):
    """The ambiguity set is empty for some mode in the support."""


class InvalidTau(DrccError, ValueError):
    pass


class DomainError(DrccError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class UnsupportedRegime(DrccError, ValueError):
    pass


class DimensionMismatch(DrccError, ValueError):
    pass


class ParseError(DrccError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class ValidationError(DrccError, ValueError):
    pass


class SingularSusceptance(DrccError, ValueError):
    pass


class MasterInfeasible(DrccError):
    pass


class SolverFailure(DrccError):
    pass


class IterationLimitExceeded(DrccError):
    """Raised by strict solves; carries the best iterate found."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"no convergence after {report.iterations} iterations "
            f"(residual violation {report.max_violation:.3e})"
        )
