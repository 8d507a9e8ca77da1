"""Exception types shared across the package.

All numerical guards raise typed errors instead of letting infinities or
garbage propagate into quadrature sums.
"""


class QtmlabError(Exception):
    """Base class for all package errors."""


class PoleProximity(QtmlabError):
    """An evaluation point is too close to a pole of coth/sinh."""


class AlphaSingular(QtmlabError):
    """q^alpha - q^(-alpha) is below the configured floor."""


class InvalidContour(QtmlabError):
    """Contour geometry violates 0 < d < gamma/2 or nesting constraints."""


class NoConvergence(QtmlabError):
    """Fixed-point iteration did not reach the tolerance.

    Carries the iteration count and the last residual.
    """

    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"no convergence after {iterations} iterations, residual {residual:.3e}"
        )


class SingularDriving(QtmlabError):
    """A zero/pole of the finite-Trotter driving term sits on (or almost on) the grid."""


class OutOfDomain(QtmlabError):
    """Evaluation point outside the validity region of an interpolant/formula."""


class RootCountMismatch(QtmlabError):
    """Zero scan found a different number of Bethe roots than expected."""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"found {found} roots, expected {expected}")


class NewtonDivergence(QtmlabError):
    """Newton iteration for roots failed to converge."""


class RootCollision(QtmlabError):
    """Two Bethe roots merged below the pairwise-distance floor."""


class MeasureSingular(QtmlabError):
    """|1 + a| fell below the floor at a contour node (root too close to contour)."""


class MeasureMismatch(QtmlabError):
    """Two quantities that must share a measure/grid were built on different ones."""


class SingularMatrix(QtmlabError):
    """Dense Nystrom system is numerically singular."""


class NuTooCloseToContour(QtmlabError):
    """Spectral parameter nu violates the node-spacing proximity rule."""


class DimensionTooLarge(QtmlabError):
    """Exact diagonalization requested beyond the supported Trotter number."""
