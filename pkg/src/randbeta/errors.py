"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation (bad base, x outside J)."""


class ExhaustedCoinsError(DomainError):
    """A switch region was hit but no coin was left to decide the digit."""


class InvalidExpansionError(DomainError):
    """A digit string is not an expansion of the given point."""


class ConvergenceError(RuntimeError):
    """An iterative scheme stopped before reaching its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class HypothesisError(ValueError):
    """A construction was requested for a base that does not satisfy its hypothesis.

    Raised e.g. when 1 has no finite greedy expansion with positive digits.
    """


class InconsistentPatternError(RuntimeError):
    """Numerical checks on an orbit or partition failed beyond tolerance."""
