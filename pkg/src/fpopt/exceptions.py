"""Exception types shared across the package."""


class DomainError(ValueError):
    """An evaluator produced a value outside its admissible range
    (negative numerator, nonpositive denominator, infeasible point)."""


class ConditioningError(RuntimeError):
    """A linear solve failed because the matrix is not (numerically)
    Hermitian positive definite."""


class BracketError(RuntimeError):
    """Bisection could not bracket a sign change even after expanding
    the search interval up to its cap."""


class ConfigError(ValueError):
    """A scenario configuration is malformed; the message names the
    offending field."""
