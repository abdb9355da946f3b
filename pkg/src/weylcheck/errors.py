"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of the operation."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance.

    Carries the last residual norm in .residual.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ObstructionError(DomainError):
    """A pointwise solvability condition failed on a grid.

    Carries the first offending point and the violated margin.
    """

    def __init__(self, message, point=None, margin=None):
        super().__init__(message)
        self.point = point
        self.margin = margin


class IntegrationError(RuntimeError):
    """Frame integration drifted past its rejection threshold."""
