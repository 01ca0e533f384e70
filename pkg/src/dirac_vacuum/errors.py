"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class CapacityError(RuntimeError):
    """A dense assembly would exceed the configured size cap."""


class DegenerateVacuumError(RuntimeError):
    """A Dirac operator has an eigenvalue at (or numerically at) zero.

    The vacuum projector is then ambiguous, so the densities are undefined.
    """

    def __init__(self, message, mass=None, min_abs_eigenvalue=None):
        super().__init__(message)
        self.mass = mass
        self.min_abs_eigenvalue = min_abs_eigenvalue
