"""
Error Types

All failures raised by the solver, generator, diagnostics and scenario layers
derive from SolverError so that the CLI and the HTTP surface can map them to a
clean exit status or a 422 response.
"""

from typing import Optional


class SolverError(Exception):
    """Base class for every error raised by the solver package."""


class SingularMatrix(SolverError):
    """A pivot fell below the singularity threshold during band factorization."""

    def __init__(self, message: str, pivot_index: Optional[int] = None):
        super().__init__(message)
        self.pivot_index = pivot_index


class DimensionMismatch(SolverError):
    """Right-hand side length does not match the matrix order."""


class UnboundState(SolverError):
    """Envelope frequencies admit no decaying localized solution (n + c^2/4 >= 0)."""


class FrequencyMismatch(SolverError):
    """Closed-form envelope requested for a frequency pair it does not cover."""


class UnsupportedModel(SolverError):
    """Initial data requested for a model the envelope generator does not support."""


class NewtonDiverged(SolverError):
    """Newton iteration for the envelope boundary-value problem did not converge."""

    def __init__(self, message: str, iterations: int = 0, update_norm: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.update_norm = update_norm


class TrivialBranch(SolverError):
    """Newton converged onto the zero solution (or a component collapsed to zero)."""


class ShiftOutOfDomain(SolverError):
    """A shifted envelope does not decay inside the computational grid."""


class OverlapTooLarge(SolverError):
    """Superposed solitons overlap more than the configured tolerance."""


class InnerIterationDiverged(SolverError):
    """Internal iterations of one time step did not converge; the time step is too large."""

    def __init__(self, message: str, iterations: int = 0, update_norm: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.update_norm = update_norm


class DegenerateWindow(SolverError):
    """Both component maxima inside a polarization window are numerically zero."""


class TrackLost(SolverError):
    """The density mass inside a tracking window vanished."""


class NoOscillation(SolverError):
    """A component-mass series shows no measurable oscillation."""


class ConfigInvalid(SolverError):
    """Scenario configuration failed validation."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class OracleUnavailable(SolverError):
    """No exact solution exists for the requested refinement scenario."""
