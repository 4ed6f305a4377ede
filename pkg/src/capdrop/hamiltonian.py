"""Energy of the drop, its L^2 gradients and the Darboux changes of variables.

With ``dmu = (1+h) J dsigma``::

    K = 1/2 int psi G(h)psi dmu,     U = int dmu,     E = K + sigma0 U.

The gradients are

    dE/dpsi = (1+h) J G(h)psi
    dE/dh   = |grad psi|^2/2 - ((1+h) G(h)psi + <grad psi, grad h>/J)^2 / 2
              + sigma0 (1+h)^2 H(h)

and the evolution reads ``(dh/dt, dpsi/dt) = (dE/dpsi, -dE/dh) / (1+h)^2``.
"""

from dataclasses import dataclass
import numpy as np

from .dno import solve_dno
from .errors import DomainDegenerate, InvalidArgument
from .geometry import build_geometry, mean_curvature
from .sphgrid import get_basis
from .state import SurfaceState

__all__ = [
    "EnergyBreakdown",
    "DARBOUX_KINDS",
    "energy",
    "GradientFields",
    "gradients_grid",
    "grad_psi",
    "grad_h",
    "vector_field",
    "darboux_forward",
    "darboux_backward",
    "darboux_vector_field",
]

DARBOUX_KINDS = ("psi_scaling", "cubic_eta")


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    total: float
    sigma0: float


def _basis(state, basis):
    return basis if basis is not None else get_basis(max(state.lmax, 1))


def energy(state, opts=None, basis=None):
    """Energy of a state, with kinetic and surface parts kept separately."""
    b = _basis(state, basis)
    res = solve_dno(state.h, state.psi, opts, b)
    geo = res.geometry
    mu = geo.measure
    psi = b.synthesize(state.psi)
    K = 0.5 * float(b.integrate(psi * res.G_grid * mu))
    U = float(b.integrate(mu))
    return EnergyBreakdown(K, U, K + state.sigma0 * U, state.sigma0)


@dataclass
class GradientFields:
    """Nodal values shared by the gradient and vector-field routines."""

    geometry: object
    dno: object
    grad_psi: np.ndarray
    grad_h_kinetic: np.ndarray
    grad_h: np.ndarray
    curvature: np.ndarray


def gradients_grid(state, opts=None, basis=None, dno_result=None):
    """Nodal L^2 gradients of the energy (before projection)."""
    b = _basis(state, basis)
    res = dno_result if dno_result is not None else solve_dno(state.h, state.psi, opts, b)
    geo = res.geometry
    a, J = geo.one_plus_h, geo.J
    G = res.G_grid
    gt, gp = b.gradient_frame(state.psi)
    gsq = gt * gt + gp * gp
    dot = gt * geo.grad_h_frame[0] + gp * geo.grad_h_frame[1]
    H = mean_curvature(geo)
    gK = 0.5 * gsq - 0.5 * (a * G + dot / J) ** 2
    gH = gK + state.sigma0 * a ** 2 * H
    return GradientFields(geo, res, a * J * G, gK, gH, H)


def grad_psi(state, opts=None, basis=None):
    """Coefficients of ``(1+h) J G(h) psi``."""
    f = gradients_grid(state, opts, basis)
    return f.geometry.basis.analyze(f.grad_psi)


def grad_h(state, opts=None, basis=None):
    """Coefficients of the h-gradient of the total energy."""
    f = gradients_grid(state, opts, basis)
    return f.geometry.basis.analyze(f.grad_h)


def vector_field(state, opts=None, basis=None):
    """``(dE/dpsi, -dE/dh) / (1+h)^2`` projected to coefficients."""
    f = gradients_grid(state, opts, basis)
    b = f.geometry.basis
    a2 = f.geometry.one_plus_h ** 2
    return b.analyze(f.grad_psi / a2), b.analyze(-f.grad_h / a2)


# ----------------------------------------------------------------------
# Darboux coordinates
#
# The forward maps are nodal products followed by projection.  Their
# inverses are computed as exact inverses of the discrete forward maps
# (a Galerkin solve for the linear case, Newton for the cubic case), so
# backward(forward(s)) reproduces s to rounding error.
# ----------------------------------------------------------------------

def _check_kind(kind):
    if kind not in DARBOUX_KINDS:
        raise InvalidArgument(f"unknown Darboux kind {kind!r}; expected one of {DARBOUX_KINDS}")


def _weighted_mass(b, weight):
    """Galerkin matrix ``analyze(weight * synthesize(.))``."""
    eye = np.eye(b.ncoef)
    return b.analyze_array(weight * b.synthesize(eye))


def darboux_forward(state, kind, basis=None):
    """Map ``(h, psi)`` to Darboux coordinates ``(eta, varpi)``.

    ``psi_scaling``: ``(h, (1+h)^2 psi)``; ``cubic_eta``: ``(((1+h)^3 - 1)/3, psi)``.
    The result is a :class:`SurfaceState` whose ``h`` slot holds ``eta`` and
    whose ``psi`` slot holds ``varpi``.
    """
    _check_kind(kind)
    b = _basis(state, basis)
    geo = build_geometry(state.h, b)
    a = geo.one_plus_h
    if kind == "psi_scaling":
        varpi = b.analyze(a ** 2 * b.synthesize(state.psi))
        return SurfaceState(state.h, varpi, state.sigma0)
    eta = b.analyze((a ** 3 - 1.0) / 3.0)
    return SurfaceState(eta, state.psi, state.sigma0)


def darboux_backward(tstate, kind, basis=None, tol=1e-14, maxiter=50):
    """Inverse of :func:`darboux_forward`."""
    _check_kind(kind)
    b = _basis(tstate, basis)
    if kind == "psi_scaling":
        geo = build_geometry(tstate.h, b)
        M = _weighted_mass(b, geo.one_plus_h ** 2)
        psi = np.linalg.solve(M, tstate.psi.resized(b.lmax).data)
        return SurfaceState(tstate.h, type(tstate.psi)(b.lmax, psi), tstate.sigma0)
    eta = tstate.h.resized(b.lmax)
    ev = b.synthesize(eta)
    base = 1.0 + 3.0 * ev
    if not float(base.min()) > 0:
        raise DomainDegenerate("1 + 3 eta must be positive for the cubic change of variables")
    # nodal inverse as the starting guess, then Newton on the projected map
    h = b.analyze(np.cbrt(base) - 1.0)
    for _ in range(maxiter):
        geo = build_geometry(h, b)
        a = geo.one_plus_h
        resid = b.analyze((a ** 3 - 1.0) / 3.0).data - eta.data
        if np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(eta.data)):
            break
        M = _weighted_mass(b, a ** 2)
        h = type(h)(b.lmax, h.data - np.linalg.solve(M, resid))
    return SurfaceState(h, tstate.psi, tstate.sigma0)


def darboux_vector_field(tstate, kind, opts=None, basis=None):
    """Canonical field ``(dE1/dvarpi, -dE1/deta)`` in Darboux coordinates.

    ``E1(eta, varpi) = E(h(eta), psi(eta, varpi))``; the chain rule expresses
    its gradients through those of ``E`` at the back-transformed state.
    """
    _check_kind(kind)
    b = _basis(tstate, basis)
    state = darboux_backward(tstate, kind, b)
    f = gradients_grid(state, opts, b)
    a = f.geometry.one_plus_h
    if kind == "psi_scaling":
        psi = b.synthesize(state.psi)
        d_varpi = f.grad_psi / a ** 2
        d_eta = f.grad_h - 2.0 * psi / a * f.grad_psi
    else:
        d_varpi = f.grad_psi
        d_eta = f.grad_h / a ** 2
    return b.analyze(d_varpi), b.analyze(-d_eta)
