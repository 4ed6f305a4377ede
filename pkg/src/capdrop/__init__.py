"""Spectral tools for the free-boundary problem of a capillary drop.

Modules, from the bottom up: ``sphgrid`` (real spherical harmonics and
quadrature), ``geometry`` (metric and curvature of star-shaped surfaces),
``dno`` (Dirichlet-Neumann operator), ``shapederiv`` (its shape derivative),
``hamiltonian`` (energy, gradients, Darboux variables), ``dynamics`` (time
stepping), ``spectrum`` (linearization and resonance arithmetic),
``travelling`` (rotating waves) and ``cli``.
"""

from .errors import (CapdropError, ContinuationFailure, ConvergenceFailure, DomainDegenerate,
                     InvalidArgument, NotSimple, RangeViolation)
from .sphgrid import SphCoeffs, BasisTable, build_basis, get_basis
from .state import SurfaceState

__version__ = "0.1.0"

__all__ = [
    "CapdropError",
    "ContinuationFailure",
    "ConvergenceFailure",
    "DomainDegenerate",
    "InvalidArgument",
    "NotSimple",
    "RangeViolation",
    "SphCoeffs",
    "BasisTable",
    "build_basis",
    "get_basis",
    "SurfaceState",
]
