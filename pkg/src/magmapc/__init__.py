"""Block preconditioners for the three-field magma/mantle flow equations.

P2-P1-P1 finite elements on structured triangulations of the unit square,
LU-backed block preconditioners and preconditioned Krylov solvers.
"""

__version__ = "0.1.0"


class DegenerateModelError(ValueError):
    """Raised when coefficient fields make the discrete problem ill-posed."""


class SingularMatrixError(ArithmeticError):
    """Raised when a factorization meets a zero or invalid pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
