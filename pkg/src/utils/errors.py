from typing import List, Optional, Sequence


class SpectralSolverError(Exception):
    """Base class for every failure raised by the solver package."""


class InvalidDomainError(SpectralSolverError):
    pass


class InvalidPartitionError(SpectralSolverError):
    pass


class EigenDecompositionError(SpectralSolverError):
    pass


class DimensionMismatchError(SpectralSolverError):
    pass


class QuotientMinimizationError(SpectralSolverError):
    def __init__(self, message: str, trace: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.trace = list(trace or [])


class ExtensionSolveError(SpectralSolverError):
    pass


class GridResolutionError(SpectralSolverError):
    pass


class NoSupersolutionError(SpectralSolverError):
    """The scalar inequality M >= lam*M^q*G^q + M^r*G^r has no solution."""

    def __init__(self, message: str, lam: float, margin: float):
        super().__init__(message)
        self.lam = lam
        self.margin = margin


class OrderingViolationError(SpectralSolverError):
    def __init__(self, message: str, iteration: int, violation: float):
        super().__init__(message)
        self.iteration = iteration
        self.violation = violation


class IterationLimitError(SpectralSolverError):
    def __init__(self, message: str, iterations: int, last_increment: float):
        super().__init__(message)
        self.iterations = iterations
        self.last_increment = last_increment


class IterationBlowUpError(SpectralSolverError):
    def __init__(self, message: str, iteration: int, sup_norm: float):
        super().__init__(message)
        self.iteration = iteration
        self.sup_norm = sup_norm


class SingularJacobianError(SpectralSolverError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class PositivityLossError(SpectralSolverError):
    pass


class NewtonDivergenceError(SpectralSolverError):
    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class TrivialSolutionError(SpectralSolverError):
    """A solve converged to a field far below the amplitude a positive solution must have."""

    def __init__(self, message: str, sup_norm: float, predicted: float):
        super().__init__(message)
        self.sup_norm = sup_norm
        self.predicted = predicted


class MountainPassError(SpectralSolverError):
    NUMERICAL_FAILURE = "numerical_failure"
    NONE_FOUND = "none_found"

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class KelvinCenterError(SpectralSolverError):
    pass


class ConfigValidationError(SpectralSolverError):
    def __init__(self, message: str, field_paths: Optional[List[str]] = None):
        super().__init__(message)
        self.field_paths = list(field_paths or [])


class InvalidParameterError(SpectralSolverError, ValueError):
    pass
