"""
Exception hierarchy for the laboratory.

Every error carries its diagnostic context as attributes so the CLI and the
sweep can report it without parsing messages.
"""
from typing import Optional


class LabError(Exception):
    """Base exception for laboratory errors"""
    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)


class DomainSpecError(LabError, ValueError):
    """Invalid domain description (mask topology, box size, resolutions)"""
    pass


class ParameterError(LabError, ValueError):
    """Model parameters outside their admissible range"""
    pass


class GridMismatchError(LabError, ValueError):
    """Fields built on different grids were combined"""
    pass


class LayerIndexError(LabError, IndexError):
    """Layer index outside 0..N"""
    pass


class SolverConvergenceError(LabError):
    """Linear solver failed to reach its tolerance"""
    def __init__(self, message: str, residual: float = None, iterations: int = None, **context):
        super().__init__(message, residual=residual, iterations=iterations, **context)


class PlacementError(LabError):
    """Vortex count does not fit the separation capacity of a square"""
    pass


class PhaseAssemblyError(LabError):
    """Phase winding found outside every vortex core"""
    pass


class QuadratureError(LabError):
    """Quadrature did not reach its tolerance after refinement"""
    pass


class NewtonianTargetError(LabError, ValueError):
    """Target point lies inside a source cell but off its center"""
    pass


class ApproximationError(LabError):
    """Mollification budget cannot be met on the current grid"""
    def __init__(self, message: str, achievable: Optional[float] = None, **context):
        super().__init__(message, achievable=achievable, **context)


class ConfigError(LabError, ValueError):
    """Malformed experiment configuration"""
    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message, field=field, line=line, column=column)

    def describe(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}, column {self.column}")
        if self.field:
            where.append(f"field '{self.field}'")
        return f"{self} ({'; '.join(where)})" if where else str(self)
