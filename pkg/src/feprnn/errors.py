"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Inputs violate a structural contract (shapes, symmetry, state layout)."""


class SolverError(RuntimeError):
    """A nonlinear solve failed to converge.

    ``info`` carries whatever diagnostic the raising solver could gather
    (residual norm, iteration count, mode index, step index ...).
    """

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class EvaluationError(RuntimeError):
    """A surrogate evaluation produced an inadmissible intermediate state."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
