"""Exception hierarchy.

Every error raised on purpose by the package derives from SpecDeconfError so
callers (the CLI in particular) can map them to exit codes.
"""


class SpecDeconfError(Exception):
    exit_code = 1


class ShapeMismatch(SpecDeconfError, ValueError):
    exit_code = 3


class NonFinite(SpecDeconfError, ValueError):
    exit_code = 3


class ZeroMatrix(SpecDeconfError, ValueError):
    exit_code = 4


class InvalidRho(SpecDeconfError, ValueError):
    exit_code = 2


class InvalidQ(SpecDeconfError, ValueError):
    exit_code = 2


class RankDeficient(SpecDeconfError, ValueError):
    exit_code = 4


class TooFewSamples(SpecDeconfError, ValueError):
    exit_code = 3


class DegenerateColumn(SpecDeconfError, ValueError):
    """A covariate column has (numerically) zero range."""

    exit_code = 3

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class SingularGram(SpecDeconfError, ArithmeticError):
    exit_code = 4


class NotConverged(SpecDeconfError, ArithmeticError):
    """Raised when the solver hits max_iter; the best iterate is attached."""

    exit_code = 4

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasiblePlan(SpecDeconfError, ValueError):
    exit_code = 2


class NotPositiveDefinite(SpecDeconfError, ValueError):
    exit_code = 4


class SingularCovariance(SpecDeconfError, ArithmeticError):
    exit_code = 4
