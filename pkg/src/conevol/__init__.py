"""Spherical calculus, cone-volume geometry and stability checks for convex bodies."""

from .body import ConvexBody, HarmonicCoeffs, NotConvexError
from .sphere import SphereGrid
from .solver import SolverConfig, SolverResult, solve
from .verify import VerificationRecord

__version__ = "0.1.0"

__all__ = [
    "ConvexBody",
    "HarmonicCoeffs",
    "NotConvexError",
    "SphereGrid",
    "SolverConfig",
    "SolverResult",
    "VerificationRecord",
    "solve",
]
