"""Exception types shared across the package."""


class DomainError(ValueError):
    """Arguments outside the domain t >= s >= 0 (or similar)."""


class ConstraintError(ValueError):
    """A structural constraint on a system or family is violated."""


class DivergenceError(ArithmeticError):
    """A quantity blew up: evolution past the divergence guard, or an
    improper integral / supremum that does not converge."""

    def __init__(self, message, horizon=None, value=float("inf")):
        super().__init__(message)
        self.horizon = horizon
        self.value = value


class InvertibilityError(ArithmeticError):
    """Restriction of the evolution to F is numerically singular."""


class ExtrapolationError(ValueError):
    """A manifold graph was queried outside its grid."""


class PreconditionError(ValueError):
    """A theorem hypothesis (gate, decay, finiteness of S) does not hold."""

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins or {}


class ConvergenceError(RuntimeError):
    """A fixed-point iteration hit its cap without meeting the tolerance."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class TruncationError(ArithmeticError):
    """Improper integral tail still above tolerance at the maximum horizon."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Scenario configuration could not be parsed or validated."""
