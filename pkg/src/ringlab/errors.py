"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class AccuracyError(RuntimeError):
    """A result was produced but fails its own accuracy checks."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class MixingError(RuntimeError):
    """A Markov chain failed its mixing / acceptance diagnostics."""


class UnsupportedRegimeError(RuntimeError):
    """The input is valid but falls outside the regime the solver handles."""
