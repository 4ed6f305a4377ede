"""Geometry of the star-shaped surface ``{(1 + h(x)) x : x in S^2}``.

All fields live on the padded grid of a :class:`~capdrop.sphgrid.BasisTable`;
callers project back to coefficients when they need to.
"""

from dataclasses import dataclass
import numpy as np

from .errors import DomainDegenerate
from .sphgrid import BasisTable, SphCoeffs, get_basis, laplace_beltrami

__all__ = [
    "STAR_MARGIN",
    "SurfaceGeometry",
    "build_geometry",
    "mean_curvature",
    "elliptic_operator",
    "surface_laplacian_pullback",
    "surface_laplacian_pullback_lh",
    "area",
    "volume",
    "normal_velocity_factor",
]

STAR_MARGIN = 1e-6


@dataclass(frozen=True)
class SurfaceGeometry:
    """Metric data of the graph surface on a quadrature grid.

    Attributes
    ----------
    h : SphCoeffs
        Elevation coefficients, padded to ``basis.lmax``.
    basis : BasisTable
    one_plus_h : ndarray
        ``1 + h`` at the nodes.
    grad_h : ndarray
        Cartesian tangential gradient of ``h``, shape (3, Nt, Np).
    grad_h_frame : tuple of ndarray
        The same gradient as (theta, phi) frame components.
    J : ndarray
        ``sqrt((1+h)^2 + |grad h|^2)``.
    normal : ndarray
        Outward unit normal ``((1+h) x - grad h) / J``.
    """

    h: SphCoeffs
    basis: BasisTable
    one_plus_h: np.ndarray
    grad_h: np.ndarray
    grad_h_frame: tuple
    grad_h_sq: np.ndarray
    J: np.ndarray
    normal: np.ndarray

    @property
    def measure(self):
        """Density ``(1+h) J`` of the surface measure pulled back to S^2."""
        return self.one_plus_h * self.J


def build_geometry(h, basis=None):
    """Evaluate J, the normal and the gradient of ``h`` on the grid.

    Raises
    ------
    DomainDegenerate
        If ``min(1 + h) < STAR_MARGIN`` on the grid.
    """
    if basis is None:
        basis = get_basis(max(h.lmax, 1))
    h = h.resized(basis.lmax)
    val, gt, gp = basis.values_and_gradient_frame(h)
    one_plus_h = 1.0 + val
    low = float(one_plus_h.min())
    if not low >= STAR_MARGIN:
        raise DomainDegenerate(f"surface not star-shaped: min(1+h) = {low:.3e} < {STAR_MARGIN:g}")
    grad = basis.frame_to_cartesian(gt, gp)
    gsq = gt * gt + gp * gp
    J = np.sqrt(one_plus_h ** 2 + gsq)
    normal = (one_plus_h * basis.e_r - grad) / J
    return SurfaceGeometry(h, basis, one_plus_h, grad, (gt, gp), gsq, J, normal)


def _hess_gg(geo, f):
    """``<D^2 f grad h, grad h>`` on the grid."""
    return geo.basis.hessian_quadratic_form(f, geo.grad_h, geo.grad_h)


def mean_curvature(geo):
    """Mean curvature (sum of principal curvatures, positive on spheres)."""
    b = geo.basis
    a, J = geo.one_plus_h, geo.J
    lap_h = b.synthesize(laplace_beltrami(geo.h))
    return (-lap_h / (a * J) + 2.0 / J + _hess_gg(geo, geo.h) / (a * J ** 3)
            + geo.grad_h_sq / J ** 3)


def elliptic_operator(geo, f):
    """``L_h f = Delta f - <D^2 f grad h, grad h> / J^2`` on the grid."""
    b = geo.basis
    f = f.resized(b.lmax)
    return b.synthesize(laplace_beltrami(f)) - _hess_gg(geo, f) / geo.J ** 2


def surface_laplacian_pullback(geo, f, H=None):
    """Laplace-Beltrami operator of the surface applied to ``f``, pulled back.

    Four-term form with the mean curvature ``H`` (computed if not given).
    """
    b = geo.basis
    f = f.resized(b.lmax)
    a, J = geo.one_plus_h, geo.J
    if H is None:
        H = mean_curvature(geo)
    gf = b.gradient(f)
    dot = np.sum(gf * geo.grad_h, axis=0)
    return (b.synthesize(laplace_beltrami(f)) / a ** 2
            - _hess_gg(geo, f) / (a ** 2 * J ** 2)
            - 2.0 * dot / (a * J ** 2)
            + H * dot / (a * J))


def surface_laplacian_pullback_lh(geo, f):
    """Same operator written through ``L_h``; used as a consistency check."""
    b = geo.basis
    f = f.resized(b.lmax)
    a, J = geo.one_plus_h, geo.J
    dot = np.sum(b.gradient(f) * geo.grad_h, axis=0)
    coef = -elliptic_operator(geo, geo.h) / (a ** 2 * J ** 2) + geo.grad_h_sq / (a * J ** 4)
    return elliptic_operator(geo, f) / a ** 2 + coef * dot


def _geo(h, basis):
    return h if isinstance(h, SurfaceGeometry) else build_geometry(h, basis)


def area(h, basis=None):
    """Surface area ``int (1+h) J dsigma``."""
    geo = _geo(h, basis)
    return float(geo.basis.integrate(geo.measure))


def volume(h, basis=None):
    """Enclosed volume ``(1/3) int (1+h)^3 dsigma``."""
    geo = _geo(h, basis)
    return float(geo.basis.integrate(geo.one_plus_h ** 3)) / 3.0


def normal_velocity_factor(geo):
    """``(1+h)/J``: normal velocity of the surface per unit ``dh/dt``."""
    return geo.one_plus_h / geo.J


def constant_sphere_curvature(c):
    """Mean curvature of the sphere of radius ``1 + c``."""
    if 1.0 + c <= 0:
        raise DomainDegenerate(f"radius 1+c = {1.0 + c} is not positive")
    return 2.0 / (1.0 + c)
