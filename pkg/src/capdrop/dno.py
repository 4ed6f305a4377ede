"""Dirichlet-Neumann operator of a star-shaped domain.

The harmonic potential of ``Omega = {r < 1 + h(x)}`` is pulled back to the
unit ball by ``y = (1 + h(x/|x|)) x``.  The pulled-back potential ``u``
solves ``div(P grad u) = 0`` in the ball with ``u = psi`` on the sphere, where

    P = (1+h) I - grad h (x) x - x (x) grad h + |grad h|^2/(1+h) x (x) x

is homogeneous of degree zero.  Because ``P`` does not depend on the radius,
every homogeneous piece ``r^k Theta(x)`` is mapped to a homogeneous piece of
the same degree by ``u -> div((P - I) grad u)``.  Ball fields are therefore
stored as finite sums ``sum_p r^p Theta_p(x)`` and the radial Green function
is applied to each power in closed form.  Starting from the harmonic
extension of ``psi`` the iterates stay inside ``{r^k : 0 <= k <= lmax}``.

Two solvers are provided: a fixed-point iteration
``u <- u0 + Delta^{-1} div((I - P) grad u)`` (default) and the power series
in ``h`` whose n-th term solves ``-Delta u_n = div g_n``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConvergenceFailure, InvalidArgument
from .geometry import build_geometry
from .sphgrid import SphCoeffs, coeff_index, degrees, get_basis, ncoeffs, sobolev_norm

__all__ = [
    "DnoOptions",
    "DnoResult",
    "BallField",
    "BallVectorField",
    "BallCoefficientField",
    "assemble_P",
    "radial_nodes",
    "harmonic_extension",
    "ball_gradient",
    "ball_divergence",
    "poisson_solve_ball",
    "solve_divergence_form",
    "solve_dno",
    "dirichlet_neumann",
    "extraction_forms",
    "self_adjointness_defect",
]


@dataclass
class DnoOptions:
    """Solver settings.

    Attributes
    ----------
    mode : {"fixed_point", "series"}
    tol : float
        Stop when the H^{1/2} norm of the increment of the boundary normal
        derivative drops below ``tol * max(1, |psi|_{H^{1/2}})``.
    maxiter : int
        Iteration cap of the fixed-point mode.
    order : int
        Highest series order N (series mode sums u_0 ... u_N).
    radial_nodes : int or None
        Number of Gauss-Legendre nodes on (0, 1) used when ball fields are
        sampled; defaults to ``2 * lmax``.
    """

    mode: str = "fixed_point"
    tol: float = 1e-10
    maxiter: int = 200
    order: int = 8
    radial_nodes: int = None

    def validate(self):
        if self.mode not in ("fixed_point", "series"):
            raise InvalidArgument(f"unknown DNO mode {self.mode!r}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise InvalidArgument(f"tol must be positive, got {self.tol}")
        if int(self.maxiter) != self.maxiter or self.maxiter < 1:
            raise InvalidArgument(f"maxiter must be an integer >= 1, got {self.maxiter}")
        if int(self.order) != self.order or self.order < 0:
            raise InvalidArgument(f"series order must be an integer >= 0, got {self.order}")
        if self.radial_nodes is not None and (int(self.radial_nodes) != self.radial_nodes
                                              or self.radial_nodes < 1):
            raise InvalidArgument(f"radial_nodes must be a positive integer, got {self.radial_nodes}")
        return self


def radial_nodes(n):
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


class BallField:
    """Scalar field ``u(r x) = sum_j r^(p0 + j) sum_lm coeffs[j, lm] phi_lm(x)``."""

    __slots__ = ("lmax", "p0", "coeffs")

    def __init__(self, lmax, p0, coeffs):
        self.lmax = int(lmax)
        self.p0 = int(p0)
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1, ncoeffs(self.lmax))

    @property
    def powers(self):
        return self.p0 + np.arange(self.coeffs.shape[0])

    @classmethod
    def zeros(cls, lmax):
        return cls(lmax, 0, np.zeros((1, ncoeffs(lmax))))

    def _aligned(self, other):
        lo = min(self.p0, other.p0)
        hi = max(self.powers[-1], other.powers[-1])
        a = np.zeros((hi - lo + 1, ncoeffs(self.lmax)))
        b = np.zeros_like(a)
        a[self.p0 - lo: self.p0 - lo + self.coeffs.shape[0]] = self.coeffs
        b[other.p0 - lo: other.p0 - lo + other.coeffs.shape[0]] = other.coeffs
        return lo, a, b

    def __add__(self, other):
        lo, a, b = self._aligned(other)
        return BallField(self.lmax, lo, a + b)

    def __sub__(self, other):
        lo, a, b = self._aligned(other)
        return BallField(self.lmax, lo, a - b)

    def __neg__(self):
        return BallField(self.lmax, self.p0, -self.coeffs)

    def __mul__(self, s):
        return BallField(self.lmax, self.p0, float(s) * self.coeffs)

    __rmul__ = __mul__

    def sample(self, r):
        """Mode coefficients at radii ``r``: array of shape (len(r), ncoef)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        pw = r[:, None] ** self.powers[None, :]
        return pw @ self.coeffs

    def radial_profile(self, l, m, r):
        return self.sample(r)[:, coeff_index(l, m)]

    def radial_derivative(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        p = self.powers
        pw = p[None, :] * r[:, None] ** (p[None, :] - 1.0)
        return pw @ self.coeffs

    def boundary_values(self):
        """Trace on the unit sphere."""
        return SphCoeffs(self.lmax, self.coeffs.sum(axis=0))

    def boundary_normal_derivative(self):
        """``<grad u, x>`` on the unit sphere (exact radial derivative)."""
        return SphCoeffs(self.lmax, self.powers @ self.coeffs)

    def norm(self):
        return float(np.linalg.norm(self.coeffs))


@dataclass
class BallVectorField:
    """Vector field ``r^(p0 + j) F_j(x)`` with frame components on a grid.

    ``comps`` has shape (npow, 3, N_theta, N_phi) holding the radial, theta
    and phi components of each ``F_j``.
    """

    basis: object
    p0: int
    comps: np.ndarray

    @property
    def powers(self):
        return self.p0 + np.arange(self.comps.shape[0])

    def at_boundary(self):
        return self.comps.sum(axis=0)


@dataclass
class BallCoefficientField:
    """The matrix P on the sphere; it is the same on every radius."""

    basis: object
    matrix: np.ndarray  # (3, 3, Nt, Np), Cartesian

    def value_at(self, r):
        """P at radius ``r``; degree-zero homogeneity makes ``r`` irrelevant."""
        if r <= 0:
            raise InvalidArgument("P is singular at the origin")
        return self.matrix

    def symmetry_defect(self):
        return float(np.abs(self.matrix - np.swapaxes(self.matrix, 0, 1)).max())

    def eigenvalue_bounds(self):
        m = np.moveaxis(self.matrix, (0, 1), (-2, -1))
        ev = np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, -1, -2)))
        return float(ev.min()), float(ev.max())


def assemble_P(h, basis=None):
    """Cartesian matrix field P of the pulled-back Laplacian."""
    geo = build_geometry(h, basis)
    b = geo.basis
    x = b.e_r
    a = geo.one_plus_h
    g = geo.grad_h
    eye = np.eye(3)[:, :, None, None]
    P = (a * eye - g[:, None] * x[None, :] - x[:, None] * g[None, :]
         + (geo.grad_h_sq / a) * x[:, None] * x[None, :])
    return BallCoefficientField(b, P)


def harmonic_extension(psi):
    """``sum_lm psi_lm r^l phi_lm`` as a :class:`BallField`."""
    L = psi.lmax
    coeffs = np.zeros((L + 1, ncoeffs(L)))
    l = degrees(L)
    coeffs[l, np.arange(ncoeffs(L))] = psi.data
    return BallField(L, 0, coeffs)


def ball_gradient(u, basis):
    """Gradient of a ball field; ``grad(r^k T) = r^(k-1) (k T x + grad_S T)``."""
    val, gt, gp = basis.values_and_gradient_frame(u.coeffs)
    k = u.powers.astype(float)[:, None, None]
    comps = np.stack([k * val, gt, gp], axis=1)
    return BallVectorField(basis, u.p0 - 1, comps)


def ball_divergence(F, lmax=None):
    """Divergence of ``r^q F(x)`` summed over powers.

    ``div(r^q F) = r^(q-1) [q <F, x> + div_S F]``.  The angular part is
    projected in weak form, ``int div_S F phi = int 2 F_r phi - <F, grad phi>``,
    so no derivative of the (non-polynomial) grid data is taken.
    """
    b = F.basis
    q = F.powers.astype(float)[:, None, None]
    c = b.analyze_weak((q + 2.0) * F.comps[:, 0], -F.comps[:, 1], -F.comps[:, 2])
    L = b.lmax
    if lmax is not None and lmax < L:
        c = c[:, : ncoeffs(lmax)]
        L = lmax
    return BallField(L, F.p0 - 1, c)


def poisson_solve_ball(f, resonant="raise", atol=1e-12):
    """Solve ``Delta u = f`` in the unit ball with ``u = 0`` on the sphere.

    Mode by mode this is ``u'' + 2u'/r - l(l+1)u/r^2 = f_lm(r)``.  For data
    ``f_lm = a r^p`` the bounded solution given by the radial Green function
    is ``a (r^(p+2) - r^l) / ((p+2)(p+3) - l(l+1))``; the formula is applied
    power by power.  When ``p + 2 = l`` the exact solution contains
    ``r^l log r``, which is outside the representation.

    Parameters
    ----------
    f : BallField
        Source with powers ``p >= -2``.
    resonant : {"raise", "drop"}
        What to do with source components at ``p + 2 = l``.
    atol : float
        Components below this magnitude are treated as zero even for
        ``resonant="raise"``.

    Returns
    -------
    u : BallField
    dropped : float
        Euclidean norm of the discarded resonant components.
    """
    if f.p0 < -2:
        raise InvalidArgument(f"source power {f.p0} < -2 gives an unbounded solution")
    L = f.lmax
    l = degrees(L)
    q = (f.powers + 2).astype(float)[:, None]
    denom = q * (q + 1.0) - (l * (l + 1.0))[None, :]
    res_mask = np.isclose(q, l[None, :])
    dropped = float(np.linalg.norm(f.coeffs[res_mask]))
    if resonant == "raise" and dropped > atol:
        raise InvalidArgument(
            f"source has logarithmic (resonant) components of norm {dropped:.3e}")
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.where(res_mask, 0.0, f.coeffs / np.where(res_mask, 1.0, denom))
    p_lo = min(f.p0 + 2, 0)
    p_hi = max(f.p0 + 2 + f.coeffs.shape[0] - 1, L)
    out = np.zeros((p_hi - p_lo + 1, ncoeffs(L)))
    out[f.p0 + 2 - p_lo: f.p0 + 2 - p_lo + part.shape[0]] = part
    # harmonic correction r^l phi_lm restores the boundary condition
    out[l - p_lo, np.arange(ncoeffs(L))] -= part.sum(axis=0)
    return BallField(L, p_lo, out), dropped


def solve_divergence_form(g, resonant="drop"):
    """Solve ``-Delta u = div g`` with ``u = 0`` on the sphere."""
    u, dropped = poisson_solve_ball(-ball_divergence(g), resonant=resonant)
    return u, dropped


class _Qop:
    """Pointwise action of ``P - I`` (or series pieces) on frame vectors."""

    def __init__(self, geo):
        self.h = geo.one_plus_h - 1.0
        self.gt, self.gp = geo.grad_h_frame
        self.gsq = geo.grad_h_sq
        self.q = self.gsq / geo.one_plus_h

    def apply(self, comps):
        vr, vt, vp = comps[:, 0], comps[:, 1], comps[:, 2]
        gdot = self.gt * vt + self.gp * vp
        r = (self.h + self.q) * vr - gdot
        t = self.h * vt - self.gt * vr
        p = self.h * vp - self.gp * vr
        return np.stack([r, t, p], axis=1)

    def apply_order(self, n, comps):
        """Action of the n-th order piece P_n (n >= 1) of the series."""
        vr, vt, vp = comps[:, 0], comps[:, 1], comps[:, 2]
        if n == 1:
            gdot = self.gt * vt + self.gp * vp
            return np.stack([self.h * vr - gdot, self.h * vt - self.gt * vr,
                             self.h * vp - self.gp * vr], axis=1)
        coef = (-self.h) ** (n - 2) * self.gsq
        zero = np.zeros_like(vr)
        return np.stack([coef * vr, zero, zero], axis=1)


@dataclass
class DnoResult:
    """Output of :func:`solve_dno`.

    ``G_grid`` holds the nodal values before projection; ``potential`` is the
    pulled-back potential in the ball.  ``contraction`` is the ratio of the
    last two increments (fixed-point mode) or of the last two series terms.
    """

    G: SphCoeffs
    G_grid: np.ndarray
    normal_derivative: SphCoeffs
    potential: BallField
    geometry: object
    iterations: int
    increments: list = field(default_factory=list)
    contraction: float = float("nan")
    resonant_defect: float = 0.0
    options: DnoOptions = None

    def sample_potential(self, n=None):
        """Potential at the radial Gauss-Legendre nodes: (nodes, values)."""
        if n is None:
            n = self.options.radial_nodes or 2 * self.G.lmax
        r, _ = radial_nodes(n)
        return r, self.potential.sample(r)


def _prepare(h, psi, basis):
    L = max(h.lmax, psi.lmax, 1)
    if basis is None:
        basis = get_basis(L)
    elif basis.lmax < L:
        raise InvalidArgument(f"basis degree {basis.lmax} below data degree {L}")
    L = basis.lmax
    return h.resized(L), psi.resized(L), basis


def solve_dno(h, psi, opts=None, basis=None, geometry=None):
    """Solve the transformed Dirichlet problem and extract ``G(h) psi``."""
    opts = (opts or DnoOptions()).validate()
    h, psi, basis = _prepare(h, psi, basis)
    geo = geometry if geometry is not None else build_geometry(h, basis)
    Q = _Qop(geo)
    u0 = harmonic_extension(psi)
    scale = max(1.0, sobolev_norm(psi, 0.5))
    increments = []
    dropped_total = 0.0

    if opts.mode == "fixed_point":
        u = u0
        R = u.boundary_normal_derivative()
        it = 0
        while True:
            it += 1
            grad = ball_gradient(u, basis)
            flux = BallVectorField(basis, grad.p0, Q.apply(grad.comps))
            w, dropped = solve_divergence_form(flux)
            u_new = u0 + w
            R_new = u_new.boundary_normal_derivative()
            inc = sobolev_norm(R_new - R, 0.5)
            increments.append(inc)
            u, R = u_new, R_new
            dropped_total = dropped
            if not math.isfinite(inc):
                raise ConvergenceFailure("DN fixed-point iteration produced non-finite values",
                                         increments)
            if inc < opts.tol * scale:
                break
            if it >= opts.maxiter:
                raise ConvergenceFailure(
                    f"DN fixed point did not converge in {opts.maxiter} iterations "
                    f"(last increment {inc:.3e})", increments)
            if it > 5 and inc > 1e6 * scale:
                raise ConvergenceFailure(
                    f"DN fixed point diverging (increment {inc:.3e})", increments)
        iterations = it
    else:
        terms = [u0]
        grads = [ball_gradient(u0, basis)]
        u = u0
        for n in range(1, opts.order + 1):
            acc = None
            for k in range(n):
                piece = Q.apply_order(n - k, grads[k].comps)
                acc = piece if acc is None else acc + piece
            un, dropped = solve_divergence_form(BallVectorField(basis, grads[0].p0, acc))
            dropped_total = max(dropped_total, dropped)
            terms.append(un)
            grads.append(ball_gradient(un, basis))
            u = u + un
            increments.append(sobolev_norm(un.boundary_normal_derivative(), 0.5))
        iterations = opts.order
        R = u.boundary_normal_derivative()

    if len(increments) >= 2 and increments[-2] > 0:
        contraction = increments[-1] / increments[-2]
    else:
        contraction = 0.0

    a, J = geo.one_plus_h, geo.J
    gpt, gpp = basis.gradient_frame(psi)
    dot = gpt * geo.grad_h_frame[0] + gpp * geo.grad_h_frame[1]
    G_grid = J * basis.synthesize(R) / a ** 2 - dot / (a * J)
    G = basis.analyze(G_grid)
    return DnoResult(G, G_grid, R, u, geo, iterations, increments, contraction,
                     dropped_total, opts)


def dirichlet_neumann(h, psi, opts=None, basis=None):
    """Coefficients of ``G(h) psi``."""
    return solve_dno(h, psi, opts, basis).G


def extraction_forms(result):
    """Nodal G from the flux form ``<P grad u, x>/((1+h)J)`` and from ``G_grid``.

    The first value is recomputed from the full gradient of the potential at
    ``r = 1``, the second is the value returned by :func:`solve_dno`.
    """
    geo = result.geometry
    b = geo.basis
    grad = ball_gradient(result.potential, b)
    v = grad.at_boundary()[None]
    pv_r = v[0, 0] + _Qop(geo).apply(v)[0, 0]
    return pv_r / (geo.one_plus_h * geo.J), result.G_grid


def self_adjointness_defect(h, psi1, psi2, opts=None, basis=None):
    """``|int psi1 G psi2 dmu - int psi2 G psi1 dmu|`` with ``dmu = (1+h)J dsigma``."""
    r1 = solve_dno(h, psi1, opts, basis)
    b = r1.geometry.basis
    r2 = solve_dno(h, psi2, opts, b, geometry=r1.geometry)
    mu = r1.geometry.measure
    f1 = b.synthesize(psi1.resized(b.lmax))
    f2 = b.synthesize(psi2.resized(b.lmax))
    i12 = b.integrate(f1 * r2.G_grid * mu)
    i21 = b.integrate(f2 * r1.G_grid * mu)
    return float(abs(i12 - i21))
