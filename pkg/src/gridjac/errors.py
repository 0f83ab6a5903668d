"""Exception types shared across the package."""


class GridJacError(Exception):
    """Base class for all package errors."""


class CaseError(GridJacError):
    """Malformed or inconsistent case data."""


class ReductionError(GridJacError):
    """Network reduction failed (e.g. islanded elimination set)."""


class ConvergenceError(GridJacError):
    """Iterative solve did not converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class StabilityError(GridJacError):
    """Operation requires a Hurwitz matrix / stable equilibrium."""


class EstimationError(GridJacError):
    """Covariance-based estimation failed (singular or ill-conditioned input)."""


class ModalError(GridJacError):
    """Eigen-analysis failure (defective matrix, wrong eigenvalue type)."""


class ScenarioError(GridJacError):
    """Invalid scenario definition or stage conflict."""
