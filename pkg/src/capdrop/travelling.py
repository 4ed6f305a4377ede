"""Rigidly rotating drops: the rotating-frame residual and branch continuation.

A travelling wave is a profile ``(eta, beta)`` whose rotation about the x3 axis
at angular velocity ``omega`` solves the evolution system.  With ``M`` the
infinitesimal rotation and ``(V_h, V_psi)`` the right-hand side of the
evolution equations, the residual is

    F1 = omega M eta - V_h(eta, beta)
    F2 = omega M beta - V_psi(eta, beta) + lambda

where the Bernoulli constant ``lambda`` absorbs the constant part of the
dynamic condition (at rest ``V_psi = -2 sigma0``).  Profiles are restricted to
``X x Y``: ``eta`` lives on the modes ``0 <= m <= l`` and ``beta`` on
``-l <= m <= -1``, both with ``l - m`` even.  F maps this space to ``Y x X``.

The continuation solves, at each amplitude ``a``,

    F1[Y] = 0,  F2[X] = 0,  <(eta, beta), v> = a,  volume(eta) = 4 pi / 3

for ``(eta[X], beta[Y], omega, lambda)``.  ``v`` is the unit kernel vector of
the linearization at ``omega_star``.  The volume condition removes the family
of concentric spheres ``eta = c``, ``lambda = -2 sigma0 / (1 + c)``, which
otherwise makes the system underdetermined.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, gmres

from .dno import DnoOptions
from .dynamics import rhs
from .errors import (ContinuationFailure, ConvergenceFailure, DomainDegenerate,
                     InvalidArgument, NotSimple)
from .geometry import build_geometry, volume
from .io import write_json
from .sphgrid import SphCoeffs, get_basis, ncoeffs, rotate_z
from .spectrum import (apply_M, omega_star, resonance_set, restricted_L_matrix,
                       x_support, y_support)
from .state import SurfaceState

__all__ = [
    "SymmetryClass",
    "BranchPoint",
    "Branch",
    "TRAVELLING_DNO_OPTIONS",
    "residual_F",
    "residual_norm",
    "kernel_vector",
    "default_lmax",
    "continue_branch",
    "rotate_state",
    "equivariance_defect",
    "travelling_to_timewave",
    "timewave_defect",
    "extrapolate_omega0",
]

SQRT4PI = math.sqrt(4.0 * math.pi)
TRAVELLING_DNO_OPTIONS = DnoOptions(tol=1e-13)


@dataclass(frozen=True)
class SymmetryClass:
    """Index supports of the symmetric profiles at a truncation degree."""

    lmax: int

    @property
    def eta_support(self):
        return x_support(self.lmax)

    @property
    def beta_support(self):
        return y_support(self.lmax)

    @staticmethod
    def _project(c, support):
        out = np.zeros_like(c.data)
        out[support] = c.data[support]
        return SphCoeffs(c.lmax, out)

    def project_eta(self, c):
        return self._project(c.resized(self.lmax), self.eta_support)

    def project_beta(self, c):
        return self._project(c.resized(self.lmax), self.beta_support)

    def defect(self, eta, beta, swapped=False):
        """Largest coefficient outside the supports (``swapped`` checks Y x X)."""
        sx, sy = self.eta_support, self.beta_support
        if swapped:
            sx, sy = sy, sx
        return max(_outside(eta.resized(self.lmax), sx), _outside(beta.resized(self.lmax), sy))


def _outside(c, support):
    mask = np.ones(c.data.size, dtype=bool)
    mask[support] = False
    return float(np.max(np.abs(c.data[mask]), initial=0.0))


def residual_F(omega, eta, beta, lam, sigma0=1.0, opts=None, basis=None):
    """Rotating-frame residual ``(F1, F2)`` as coefficient vectors."""
    L = max(eta.lmax, beta.lmax)
    state = SurfaceState(eta.resized(L), beta.resized(L), sigma0)
    vh, vpsi = rhs(state, opts if opts is not None else TRAVELLING_DNO_OPTIONS, basis)
    F1 = omega * apply_M(state.h) - vh
    F2 = omega * apply_M(state.psi) - vpsi
    F2.data[0] += lam * SQRT4PI
    return F1, F2


def residual_norm(F):
    """L^2 x L^2 norm of a residual pair."""
    return math.hypot(F[0].norm(), F[1].norm())


def kernel_vector(l0, m0, omega, lmax=None):
    """Unit vector ``(l0 phi_{l0,m0}, -omega m0 phi_{l0,-m0})`` spanning the kernel."""
    l0, m0 = int(l0), int(m0)
    if l0 < 2 or not 1 <= m0 <= l0:
        raise InvalidArgument(f"need l0 >= 2 and 1 <= m0 <= l0, got ({l0}, {m0})")
    L = l0 if lmax is None else int(lmax)
    if L < l0:
        raise InvalidArgument(f"lmax {L} is below l0 = {l0}")
    nrm = math.hypot(l0, omega * m0)
    eta = SphCoeffs.delta(L, l0, m0, l0 / nrm)
    beta = SphCoeffs.delta(L, l0, -m0, -omega * m0 / nrm)
    return eta, beta


def default_lmax(l0):
    return max(16, 4 * int(l0))


# ----------------------------------------------------------------------
# branch data
# ----------------------------------------------------------------------

@dataclass
class BranchPoint:
    omega: float
    amplitude: float
    lam: float
    eta: SphCoeffs
    beta: SphCoeffs
    residual: float
    newton_iterations: int = 0

    def to_dict(self):
        return {
            "omega": self.omega,
            "a": self.amplitude,
            "lambda": self.lam,
            "residual": self.residual,
            "eta": self.eta.to_dict(),
            "beta": self.beta.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(float(obj["omega"]), float(obj["a"]), float(obj["lambda"]),
                       SphCoeffs.from_dict(obj["eta"]), SphCoeffs.from_dict(obj["beta"]),
                       float(obj["residual"]))
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed branch point: {exc}") from None


@dataclass
class Branch:
    l0: int
    m0: int
    sigma0: float
    points: list = field(default_factory=list)

    def to_dict(self):
        return {
            "l0": self.l0,
            "m0": self.m0,
            "sigma0": self.sigma0,
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(int(obj["l0"]), int(obj["m0"]), float(obj["sigma0"]),
                       [BranchPoint.from_dict(p) for p in obj["points"]])
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed branch object: {exc}") from None

    def write_json(self, path):
        write_json(path, self.to_dict())

    @property
    def amplitudes(self):
        return np.array([p.amplitude for p in self.points])

    @property
    def omegas(self):
        return np.array([p.omega for p in self.points])


# ----------------------------------------------------------------------
# the augmented system
# ----------------------------------------------------------------------

class _System:
    """Augmented equations on the packed unknowns ``(eta[X], beta[Y], omega, lambda)``."""

    def __init__(self, l0, m0, sigma0, lmax, opts):
        self.lmax = lmax
        self.sigma0 = sigma0
        self.opts = opts
        self.basis = get_basis(lmax)
        self.X, self.Y = x_support(lmax), y_support(lmax)
        self.nx, self.ny = len(self.X), len(self.Y)
        self.n = self.nx + self.ny + 2
        self.omega_star = omega_star(l0, m0, sigma0)
        ke, kb = kernel_vector(l0, m0, self.omega_star, lmax)
        self.kernel = np.concatenate([ke.data[self.X], kb.data[self.Y]])
        self.L0 = restricted_L_matrix(lmax, self.omega_star, sigma0)
        self.volume0 = 4.0 * math.pi / 3.0
        self.i00 = int(np.nonzero(self.X == 0)[0][0])

    def unpack(self, z):
        N = ncoeffs(self.lmax)
        eta = np.zeros(N)
        beta = np.zeros(N)
        eta[self.X] = z[:self.nx]
        beta[self.Y] = z[self.nx:self.nx + self.ny]
        return (SphCoeffs(self.lmax, eta), SphCoeffs(self.lmax, beta),
                float(z[-2]), float(z[-1]))

    def pack(self, eta, beta, omega, lam):
        return np.concatenate([eta.resized(self.lmax).data[self.X],
                               beta.resized(self.lmax).data[self.Y], [omega, lam]])

    def full_residual(self, z):
        eta, beta, omega, lam = self.unpack(z)
        return residual_F(omega, eta, beta, lam, self.sigma0, self.opts, self.basis)

    def equations(self, z, a):
        F1, F2 = self.full_residual(z)
        eta = self.unpack(z)[0]
        amp = float(self.kernel @ z[:-2]) - a
        vol = volume(build_geometry(eta, self.basis)) - self.volume0
        return np.concatenate([F1.data[self.Y], F2.data[self.X], [amp, vol]])

    def preconditioner(self, z):
        """Bordered linearization at the sphere, with the current omega-derivative."""
        eta, beta, omega, _ = self.unpack(z)
        n = self.n
        B = np.zeros((n, n))
        B[:n - 2, :n - 2] = restricted_L_matrix(self.lmax, omega, self.sigma0)
        B[:self.ny, n - 2] = apply_M(eta).data[self.Y]
        B[self.ny:n - 2, n - 2] = apply_M(beta).data[self.X]
        B[self.ny + self.i00, n - 1] = SQRT4PI
        B[n - 2, :n - 2] = self.kernel
        B[n - 1, self.i00] = SQRT4PI
        return lu_factor(B)


def _newton(system, z, a, tol, maxiter, fd_step=1e-7):
    """Newton-Krylov iteration with the bordered linearization as preconditioner.

    Returns ``(z, residual, iterations)``; raises ConvergenceFailure.
    """
    r = system.equations(z, a)
    res = float(np.linalg.norm(r))
    history = [res]
    for it in range(1, maxiter + 1):
        if res < tol:
            return z, res, it - 1
        lu = system.preconditioner(z)
        zn = float(np.linalg.norm(z))

        def matvec(d, z=z, r=r):
            nd = float(np.linalg.norm(d))
            if nd == 0.0:
                return np.zeros_like(d)
            eps = fd_step * max(1.0, zn) / nd
            return (system.equations(z + eps * d, a) - r) / eps

        A = LinearOperator((system.n, system.n), matvec=matvec)
        M = LinearOperator((system.n, system.n), matvec=lambda v, lu=lu: lu_solve(lu, v))
        dz, _ = gmres(A, -r, M=M, rtol=1e-3, atol=0.0, restart=30, maxiter=3)
        step = 1.0
        while True:
            trial = z + step * dz
            try:
                rt = system.equations(trial, a)
                rn = float(np.linalg.norm(rt))
            except (DomainDegenerate, ConvergenceFailure):
                rn = math.inf
            if rn < res or step < 1.0 / 64:
                break
            step *= 0.5
        if not math.isfinite(rn):
            raise ConvergenceFailure("Newton step left the admissible set", history)
        z, r, res = trial, rt, rn
        history.append(res)
    if res < tol:
        return z, res, maxiter
    raise ConvergenceFailure(f"Newton did not reach {tol:g} in {maxiter} iterations "
                             f"(residual {res:.3e})", history)


def continue_branch(l0, m0, sigma0=1.0, a_max=0.05, n_steps=20, tol=1e-9, lmax=None,
                    opts=None, newton_tol=1e-10, maxiter=25):
    """Follow the travelling-wave branch bifurcating at ``omega_star(l0, m0)``.

    Amplitudes ``a_k = k a_max / n_steps`` for ``k = 0 .. n_steps`` are solved
    in turn, each from a secant prediction through the two previous points.
    Point 0 is the round sphere ``(omega_star, 0, -2 sigma0)``.

    Raises
    ------
    NotSimple
        If the kernel of the restricted linearization is not one-dimensional.
    ContinuationFailure
        If Newton fails or an accepted residual exceeds ``tol``; the exception
        carries the branch computed so far.
    """
    report = resonance_set(l0, m0, sigma0)
    if not report.simple:
        raise NotSimple(f"kernel not simple for (l0, m0) = ({l0}, {m0}): "
                        f"S_res = {list(report.S_res)}")
    a_max, tol = float(a_max), float(tol)
    n_steps = int(n_steps)
    if not (a_max > 0 and math.isfinite(a_max)):
        raise InvalidArgument(f"a_max must be positive, got {a_max}")
    if n_steps < 1:
        raise InvalidArgument("n_steps must be >= 1")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    lmax = default_lmax(l0) if lmax is None else int(lmax)
    if lmax < l0:
        raise InvalidArgument(f"lmax {lmax} is below l0 = {l0}")
    opts = opts if opts is not None else TRAVELLING_DNO_OPTIONS
    system = _System(report.l0, report.m0, float(sigma0), lmax, opts)
    branch = Branch(report.l0, report.m0, float(sigma0))

    z0 = np.zeros(system.n)
    z0[-2] = system.omega_star
    z0[-1] = -2.0 * sigma0
    res0 = residual_norm(system.full_residual(z0))
    e, b_, w, lam = system.unpack(z0)
    branch.points.append(BranchPoint(w, 0.0, lam, e, b_, res0))
    zs = [z0]
    for k in range(1, n_steps + 1):
        a = k * a_max / n_steps
        if len(zs) == 1:
            guess = z0.copy()
            guess[:-2] += a * system.kernel
        else:
            guess = 2.0 * zs[-1] - zs[-2]
        try:
            z, _, its = _newton(system, guess, a, newton_tol, maxiter)
        except (ConvergenceFailure, DomainDegenerate) as exc:
            raise ContinuationFailure(f"continuation stopped at a = {a:g}: {exc}", branch) from exc
        res = residual_norm(system.full_residual(z))
        if not res < tol:
            raise ContinuationFailure(f"residual {res:.3e} at a = {a:g} exceeds {tol:g}", branch)
        e, b_, w, lam = system.unpack(z)
        branch.points.append(BranchPoint(w, a, lam, e, b_, res, its))
        zs.append(z)
    return branch


def extrapolate_omega0(branch, npoints=6, degree=2):
    """Estimate ``omega(0+)`` by a polynomial fit in ``a^2``.

    The reflection ``a -> -a`` maps the branch to itself (a rotation by
    ``pi / m0``), so ``omega`` is even in ``a``.  The trivial point is
    excluded from the fit.
    """
    pts = [p for p in branch.points if p.amplitude > 0][:npoints]
    if len(pts) < degree + 1:
        raise InvalidArgument(f"need at least {degree + 1} nontrivial points")
    a2 = np.array([p.amplitude for p in pts]) ** 2
    w = np.array([p.omega for p in pts])
    coef = np.polyfit(a2, w, degree)
    return float(coef[-1])


# ----------------------------------------------------------------------
# rotations and the time-dependent solution
# ----------------------------------------------------------------------

def rotate_state(eta, beta, theta):
    """Rotate both profiles about x3: ``f -> f(R(theta) x)``."""
    return rotate_z(eta, theta), rotate_z(beta, theta)


def equivariance_defect(omega, eta, beta, lam, theta, sigma0=1.0, opts=None, basis=None):
    """``|F(rotated u) - rotated F(u)|`` in L^2 x L^2."""
    F1, F2 = residual_F(omega, eta, beta, lam, sigma0, opts, basis)
    re, rb = rotate_state(eta, beta, theta)
    G1, G2 = residual_F(omega, re, rb, lam, sigma0, opts, basis)
    R1, R2 = rotate_state(F1, F2, theta)
    return math.hypot((G1 - R1).norm(), (G2 - R2).norm())


def travelling_to_timewave(point, t, sigma0=1.0):
    """State ``(h, psi)`` at time ``t`` of the rotating solution.

    ``h = eta(R(omega t) x)`` and ``psi = beta(R(omega t) x) + lambda t``.
    The linear growth of the constant mode follows from the Bernoulli
    constant: the dynamic condition gives ``dpsi/dt = omega M psi + lambda``.
    """
    theta = point.omega * float(t)
    h, psi = rotate_state(point.eta, point.beta, theta)
    psi = psi.copy()
    psi.data[0] += point.lam * float(t) * SQRT4PI
    return SurfaceState(h, psi, sigma0)


def timewave_defect(point, t, sigma0=1.0, opts=None, basis=None):
    """Mismatch between the evolution equations and the rotating solution at ``t``.

    Compares ``rhs(h(t), psi(t))`` with the exact time derivative of the
    rotating solution, ``(omega M h, omega M psi + lambda)``.
    """
    state = travelling_to_timewave(point, t, sigma0)
    vh, vpsi = rhs(state, opts if opts is not None else TRAVELLING_DNO_OPTIONS, basis)
    dh = point.omega * apply_M(state.h)
    dpsi = point.omega * apply_M(state.psi)
    dpsi.data[0] += point.lam * SQRT4PI
    return math.hypot((vh - dh).norm(), (vpsi - dpsi).norm())
