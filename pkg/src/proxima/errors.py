"""Exception types raised across the package."""


class ProximaError(Exception):
    """Base class for all library errors."""


class ParseError(ProximaError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PreconditionError(ProximaError, ValueError):
    pass


class RankDeficiencyError(ProximaError, ArithmeticError):
    """Design matrix is (numerically) rank deficient.

    ``column`` is the index of the first column found to be linearly
    dependent on the columns before it.
    """

    def __init__(self, column, rank=None):
        self.column = column
        self.rank = rank
        super().__init__(f"rank deficient design: column {column} is linearly dependent")


class DegenerateFitError(ProximaError, ArithmeticError):
    pass


class DomainError(ProximaError, ArithmeticError):
    """A mean or linear predictor left the admissible domain of a link/family."""


class ConvergenceError(ProximaError, ArithmeticError):
    pass
