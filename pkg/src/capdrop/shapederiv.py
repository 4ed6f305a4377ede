"""Shape derivative of the Dirichlet-Neumann operator.

    G'(h)[eta] psi = b eta + <B, grad eta> - G(h)(W eta)

with the coefficients

    W = <grad psi, grad h>/J^2 + (1+h) G(h)psi / J
    B = <grad psi, grad h> grad h / ((1+h) J^3) - grad psi / ((1+h) J)
    b = <grad psi, grad h>/J^3 - 2 G(h)psi/(1+h)
        - div_S[(1+h)(grad psi - W grad h)] / ((1+h)^2 J)
"""

from dataclasses import dataclass

import numpy as np

from .dno import DnoOptions, solve_dno
from .errors import InvalidArgument
from .geometry import build_geometry
from .sphgrid import SphCoeffs, sobolev_norm

__all__ = ["ShapeDerivCoeffs", "coefficients", "shape_derivative", "fd_defect"]


@dataclass
class ShapeDerivCoeffs:
    """Grid values of W, B (Cartesian) and b, plus the geometry used."""

    W: np.ndarray
    B: np.ndarray
    b: np.ndarray
    geometry: object


def coefficients(h, psi, Gpsi, basis=None, geometry=None):
    """Evaluate W, B and b on the grid.

    ``Gpsi`` is either the coefficient vector of ``G(h) psi`` or a nodal array
    of it on the grid of ``basis``.
    """
    geo = geometry if geometry is not None else build_geometry(h, basis)
    bt = geo.basis
    psi = psi.resized(bt.lmax)
    if isinstance(Gpsi, SphCoeffs):
        Gv = bt.synthesize(Gpsi.resized(bt.lmax))
    else:
        Gv = np.asarray(Gpsi, dtype=float)
    a, J = geo.one_plus_h, geo.J
    gpsi = bt.gradient(psi)
    gh = geo.grad_h
    dot = np.sum(gpsi * gh, axis=0)
    W = dot / J ** 2 + a * Gv / J
    B = dot * gh / (a * J ** 3) - gpsi / (a * J)
    flux = a * (gpsi - W * gh)
    div = bt.tangential_divergence(flux)
    b = dot / J ** 3 - 2.0 * Gv / a - div / (a ** 2 * J)
    return ShapeDerivCoeffs(W, B, b, geo)


def shape_derivative(h, eta, psi, opts=None, basis=None):
    """Coefficients of ``G'(h)[eta] psi``."""
    res = solve_dno(h, psi, opts, basis)
    geo = res.geometry
    bt = geo.basis
    co = coefficients(h, psi, res.G_grid, geometry=geo)
    eta = eta.resized(bt.lmax)
    ev = bt.synthesize(eta)
    geta = bt.gradient(eta)
    local = bt.analyze(co.b * ev + np.sum(co.B * geta, axis=0))
    transported = bt.analyze(co.W * ev)
    nonlocal_part = solve_dno(h, transported, opts, bt, geometry=geo).G
    return local - nonlocal_part


def fd_defect(h, eta, psi, eps, opts=None, basis=None):
    """H^{1/2} norm of ``G'(h)[eta]psi`` minus its central-difference estimate."""
    eps = float(eps)
    if eps == 0.0 or not np.isfinite(eps):
        raise InvalidArgument("finite-difference step must be a non-zero finite number")
    if opts is None:
        opts = DnoOptions(tol=1e-13)
    exact = shape_derivative(h, eta, psi, opts, basis)
    bt = basis
    gp = solve_dno(h + eps * eta, psi, opts, bt).G
    gm = solve_dno(h - eps * eta, psi, opts, bt).G
    fd = (gp - gm) / (2.0 * eps)
    return sobolev_norm(exact - fd, 0.5)
