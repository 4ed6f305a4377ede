"""Linearization at the round sphere, the dispersion relation and resonances.

In the rotating frame the linearized operator at ``u = 0`` is

    L(eta, beta) = (omega M eta - G(0) beta,  omega M beta - sigma0 (2 + Delta) eta)

with ``M = x1 d2 - x2 d1`` acting as ``M phi_{l,m} = -m phi_{l,-m}``.  It splits
into 2x2 blocks coupling ``(eta_{l,m}, beta_{l,-m})`` to ``(f_{l,-m}, g_{l,m})``::

    L_{l,m} = [[-omega m, -l], [sigma0 (l+2)(l-1), omega m]]

The resonance arithmetic works on the integer form of ``det L_{l,m} = 0`` and
never touches floating point.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import InvalidArgument, RangeViolation
from .io import write_json
from .sphgrid import SphCoeffs, coeff_index, degrees, ncoeffs, orders

__all__ = [
    "BlockL",
    "ResonanceReport",
    "FAMILY_KINDS",
    "apply_M",
    "apply_L",
    "dispersion_det",
    "omega_star",
    "resonance_set",
    "is_prime",
    "family_pair",
    "verify_family",
    "invert_block",
    "x_support",
    "y_support",
    "invert_L_restricted",
    "restricted_L_matrix",
    "restricted_singular_values",
    "restricted_inverse_bound",
    "det_lower_bound_scan",
]

FAMILY_KINDS = ("odd_prime_product", "prime_minus_two", "twice_prime")

# relative size below which a block determinant counts as zero
_RES_RTOL = 1e-10


def _check_pair(l0, m0):
    if isinstance(l0, bool) or isinstance(m0, bool):
        raise InvalidArgument("l0 and m0 must be integers")
    try:
        il, im = int(l0), int(m0)
    except (TypeError, ValueError):
        raise InvalidArgument(f"l0, m0 must be integers, got {l0!r}, {m0!r}") from None
    if il != l0 or im != m0:
        raise InvalidArgument(f"l0, m0 must be integers, got {l0!r}, {m0!r}")
    if il < 2 or not 1 <= im <= il:
        raise InvalidArgument(f"need l0 >= 2 and 1 <= m0 <= l0, got ({il}, {im})")
    return il, im


def _check_sigma(sigma0):
    s = float(sigma0)
    if not (s > 0 and math.isfinite(s)):
        raise InvalidArgument(f"sigma0 must be positive and finite, got {sigma0}")
    return s


def _capillary(l):
    """``(l+2)(l-1)``, the symbol of ``-(2 + Delta)``."""
    return (l + 2) * (l - 1)


# ----------------------------------------------------------------------
# linear operators
# ----------------------------------------------------------------------

def apply_M(c):
    """Infinitesimal rotation about x3: ``phi_{l,m} -> -m phi_{l,-m}``."""
    m = orders(c.lmax)
    out = np.zeros_like(c.data)
    idx = np.arange(c.data.size)
    # slot (l,-m) receives -m times the (l,m) coefficient
    out[idx - 2 * m] = -m * c.data
    return SphCoeffs(c.lmax, out)


def apply_L(eta, beta, omega, sigma0):
    """Linearized rotating-frame operator at the sphere, spectrally."""
    sigma0 = _check_sigma(sigma0)
    L = max(eta.lmax, beta.lmax)
    eta, beta = eta.resized(L), beta.resized(L)
    l = degrees(L).astype(float)
    f = omega * apply_M(eta).data - l * beta.data
    g = omega * apply_M(beta).data + sigma0 * _capillary(l) * eta.data
    return SphCoeffs(L, f), SphCoeffs(L, g)


@dataclass(frozen=True)
class BlockL:
    """The 2x2 block of the linearized operator at ``(l, m)``."""

    l: int
    m: int
    omega: float
    sigma0: float

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise InvalidArgument(f"need 0 <= |m| <= l, got ({self.l}, {self.m})")
        _check_sigma(self.sigma0)

    @property
    def entries(self):
        wm = self.omega * self.m
        return np.array([[-wm, -float(self.l)],
                         [self.sigma0 * _capillary(self.l), wm]])

    @property
    def det(self):
        return dispersion_det(self.l, self.m, self.omega, self.sigma0)


def dispersion_det(l, m, omega, sigma0):
    """``det L_{l,m} = -omega^2 m^2 + sigma0 (l+2)(l-1) l``."""
    sigma0 = _check_sigma(sigma0)
    if l < 0 or abs(m) > l:
        raise InvalidArgument(f"need 0 <= |m| <= l, got ({l}, {m})")
    return -(omega * m) ** 2 + sigma0 * _capillary(l) * l + 0.0


def omega_star(l0, m0, sigma0=1.0):
    """Angular velocity at which the ``(l0, m0)`` block becomes singular."""
    l0, m0 = _check_pair(l0, m0)
    sigma0 = _check_sigma(sigma0)
    return math.sqrt(sigma0) * math.sqrt(_capillary(l0) * l0) / m0


# ----------------------------------------------------------------------
# resonance arithmetic (exact integers)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceReport:
    """Solutions of the resonance equation for a critical pair.

    ``S`` lists all ``(l, m)`` with ``0 <= |m| <= l`` and
    ``m0^2 (l+2)(l-1) l = (l0+2)(l0-1) l0 m^2``, sorted lexicographically;
    ``S_res`` keeps those with ``l >= 1``, ``m >= 0`` and ``l - m`` even.
    """

    l0: int
    m0: int
    c0: Fraction
    omega_star: float
    S: tuple
    S_res: tuple
    simple: bool

    def to_dict(self):
        return {
            "l0": self.l0,
            "m0": self.m0,
            "c0_num": self.c0.numerator,
            "c0_den": self.c0.denominator,
            "omega_star": self.omega_star,
            "S": [list(p) for p in self.S],
            "S_res": [list(p) for p in self.S_res],
            "simple": self.simple,
        }

    def write_json(self, path):
        write_json(path, self.to_dict())


def resonance_set(l0, m0, sigma0=1.0):
    """Enumerate the resonant pairs of ``(l0, m0)`` exactly.

    Every solution has ``l <= c0``, so the scan covers ``0 <= l <= floor(c0)``.
    For each ``l`` the equation fixes ``m^2 = m0^2 (l+2)(l-1) l / N`` with
    ``N = (l0+2)(l0-1) l0``; testing that quotient for an integer square root
    is equivalent to trying every ``|m| <= l`` and keeps large ``c0`` cheap.
    """
    l0, m0 = _check_pair(l0, m0)
    N = _capillary(l0) * l0
    c0 = Fraction(N, m0 * m0)
    S = []
    for l in range(0, math.floor(c0) + 1):
        A = m0 * m0 * _capillary(l) * l
        if A % N:
            continue
        q = A // N
        r = math.isqrt(q)
        if r * r != q or r > l:
            continue
        S.append((l, -r) if r else (l, 0))
        if r:
            S.append((l, r))
    S.sort()
    S_res = tuple(p for p in S if p[0] >= 1 and p[1] >= 0 and (p[0] - p[1]) % 2 == 0)
    simple = S_res == ((l0, m0),)
    return ResonanceReport(l0, m0, c0, omega_star(l0, m0, sigma0), tuple(S), S_res, simple)


def is_prime(n):
    """Deterministic trial division."""
    if isinstance(n, bool) or int(n) != n:
        return False
    n = int(n)
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def family_pair(kind, params):
    """``(l0, m0)`` of one of the three infinite simple families.

    ``odd_prime_product`` takes a sequence of distinct odd primes,
    ``prime_minus_two`` a prime ``l0 >= 11`` and ``twice_prime`` a prime
    ``p > 3``.
    """
    if kind == "odd_prime_product":
        try:
            primes = [int(p) for p in params]
        except TypeError:
            primes = [int(params)]
        if not primes:
            raise InvalidArgument("need at least one prime")
        if len(set(primes)) != len(primes):
            raise InvalidArgument(f"primes must be distinct, got {primes}")
        for p in primes:
            if not is_prime(p) or p == 2:
                raise InvalidArgument(f"{p} is not an odd prime")
        l0 = math.prod(primes)
        return l0, l0
    if kind == "prime_minus_two":
        l0 = int(params)
        if not is_prime(l0) or l0 < 11:
            raise InvalidArgument(f"need a prime l0 >= 11, got {params}")
        return l0, l0 - 2
    if kind == "twice_prime":
        p = int(params)
        if not is_prime(p) or p <= 3:
            raise InvalidArgument(f"need a prime p > 3, got {params}")
        return 2 * p, 2 * p
    raise InvalidArgument(f"unknown family {kind!r}; expected one of {FAMILY_KINDS}")


def verify_family(kind, params):
    """Check by enumeration that the family member has a simple kernel."""
    l0, m0 = family_pair(kind, params)
    return resonance_set(l0, m0).simple


def det_lower_bound_scan(l0, m0, sigma0=1.0, lmax=200):
    """``min |det L_{l,m}| / l^3`` over ``1 <= l <= lmax`` off the resonance set.

    Evaluated at ``omega = omega_star(l0, m0)`` with exact integers:
    ``det = sigma0 (m0^2 (l+2)(l-1) l - N m^2) / m0^2``.
    Returns ``(C, (l, m))`` with the minimizing pair.
    """
    l0, m0 = _check_pair(l0, m0)
    sigma0 = _check_sigma(sigma0)
    N = _capillary(l0) * l0
    best, arg = None, None
    for l in range(1, int(lmax) + 1):
        A = m0 * m0 * _capillary(l) * l
        for m in range(0, l + 1):
            D = A - N * m * m
            if D == 0:
                continue
            ratio = Fraction(abs(D), m0 * m0 * l ** 3)
            if best is None or ratio < best:
                best, arg = ratio, (l, m)
    return sigma0 * float(best), arg


# ----------------------------------------------------------------------
# block inversion
# ----------------------------------------------------------------------

def _is_resonant(l, m, omega, sigma0):
    scale = (omega * m) ** 2 + sigma0 * abs(_capillary(l)) * l + 1.0
    return abs(dispersion_det(l, m, omega, sigma0)) <= _RES_RTOL * scale


def invert_block(l, m, omega, sigma0, f_hat, g_hat, atol=1e-10):
    """Solve ``L_{l,m} (eta_{l,m}, beta_{l,-m}) = (f_{l,-m}, g_{l,m})``.

    Off resonance the solution is unique.  On resonance the block is solvable
    only when ``omega m f + l g = 0`` (``f = 0`` for ``l = 0``) and the
    solution orthogonal to the kernel is returned.

    Raises
    ------
    RangeViolation
        On a resonant block whose right-hand side violates the solvability
        condition by more than ``atol``.
    """
    sigma0 = _check_sigma(sigma0)
    if l < 0 or abs(m) > l:
        raise InvalidArgument(f"need 0 <= |m| <= l, got ({l}, {m})")
    wm = omega * m
    cap = sigma0 * _capillary(l)
    if not _is_resonant(l, m, omega, sigma0):
        det = dispersion_det(l, m, omega, sigma0)
        return (wm * f_hat + l * g_hat) / det, (-cap * f_hat - wm * g_hat) / det
    if l == 0:
        if abs(f_hat) > atol:
            raise RangeViolation(f"block (0,0) needs f = 0, got {f_hat:.3e}", abs(f_hat))
        return -g_hat / (2.0 * sigma0), 0.0
    defect = wm * f_hat + l * g_hat
    if abs(defect) > atol * max(1.0, abs(wm) + l):
        raise RangeViolation(
            f"block ({l},{m}) is resonant and the data violate solvability: "
            f"omega m f + l g = {defect:.3e}", defect)
    den = l * l + wm * wm
    return -wm * f_hat / den, -l * f_hat / den


# ----------------------------------------------------------------------
# symmetric subspaces and the restricted operator
# ----------------------------------------------------------------------

def x_support(lmax):
    """Flat indices of ``{0 <= m <= l, l - m even}`` (the eta supports)."""
    l, m = degrees(lmax), orders(lmax)
    return np.nonzero((m >= 0) & ((l - m) % 2 == 0))[0]


def y_support(lmax):
    """Flat indices of ``{-l <= m <= -1, l - m even}`` (the beta supports)."""
    l, m = degrees(lmax), orders(lmax)
    return np.nonzero((m <= -1) & ((l - m) % 2 == 0))[0]


def _outside(c, support):
    mask = np.ones(c.data.size, dtype=bool)
    mask[support] = False
    return float(np.max(np.abs(c.data[mask]), initial=0.0))


def invert_L_restricted(f, g, omega, sigma0, atol=1e-10):
    """Inverse of the linearized operator from ``Y x X`` onto ``X x Y``.

    ``f`` must be supported on the ``Y`` indices and ``g`` on the ``X``
    indices.  Each block with ``m >= 1`` is a 2x2 system; on the ``m = 0``
    modes only ``eta_{l,0}`` is present and solves
    ``sigma0 (l+2)(l-1) eta = g``.

    Raises
    ------
    RangeViolation
        If the data leave the symmetric supports or violate solvability on
        a resonant block.
    """
    sigma0 = _check_sigma(sigma0)
    L = max(f.lmax, g.lmax)
    f, g = f.resized(L), g.resized(L)
    X, Y = x_support(L), y_support(L)
    off = max(_outside(f, Y), _outside(g, X))
    if off > atol:
        raise RangeViolation(f"data leave the symmetric supports by {off:.3e}", off)
    eta = np.zeros(ncoeffs(L))
    beta = np.zeros(ncoeffs(L))
    for k in X:
        l, m = int(degrees(L)[k]), int(orders(L)[k])
        if m == 0:
            eta[k] = g.data[k] / (sigma0 * _capillary(l))
            continue
        j = coeff_index(l, -m)
        eta[k], beta[j] = invert_block(l, m, omega, sigma0, f.data[j], g.data[k], atol)
    return SphCoeffs(L, eta), SphCoeffs(L, beta)


def restricted_L_matrix(lmax, omega, sigma0):
    """Dense matrix of the linearized operator from ``X x Y`` to ``Y x X``.

    Unknowns are ordered ``(eta[X], beta[Y])`` and equations ``(f[Y], g[X])``.
    """
    sigma0 = _check_sigma(sigma0)
    X, Y = x_support(lmax), y_support(lmax)
    n = ncoeffs(lmax)
    nx, ny = len(X), len(Y)
    A = np.zeros((ny + nx, nx + ny))
    for col in range(nx + ny):
        e = np.zeros(n)
        b = np.zeros(n)
        if col < nx:
            e[X[col]] = 1.0
        else:
            b[Y[col - nx]] = 1.0
        fo, go = apply_L(SphCoeffs(lmax, e), SphCoeffs(lmax, b), omega, sigma0)
        A[:ny, col] = fo.data[Y]
        A[ny:, col] = go.data[X]
    return A


def restricted_singular_values(lmax, omega, sigma0):
    """Singular values of :func:`restricted_L_matrix` in increasing order."""
    return np.sort(np.linalg.svd(restricted_L_matrix(lmax, omega, sigma0), compute_uv=False))


def restricted_inverse_bound(lmax, omega, sigma0, s=1.0):
    """Largest gain of the restricted inverse over the resolved blocks.

    The gain of a block is the operator norm from the weighted data norm
    ``(l^s f, l^(s-1/2) g)`` to the weighted solution norm
    ``(l^(s+3/2) eta, l^(s+1) beta)``; resonant blocks use the kernel-orthogonal
    inverse.  The maximum stays bounded as ``lmax`` grows.
    """
    sigma0 = _check_sigma(sigma0)
    worst = 0.0
    for k in x_support(lmax):
        l, m = int(degrees(lmax)[k]), int(orders(lmax)[k])
        if l == 0:
            worst = max(worst, 1.0 / (2.0 * sigma0))
            continue
        if m == 0:
            worst = max(worst, l * l / (sigma0 * abs(_capillary(l))))
            continue
        B = BlockL(l, m, omega, sigma0).entries
        if _is_resonant(l, m, omega, sigma0):
            inv = np.linalg.pinv(B)
        else:
            inv = np.linalg.inv(B)
        out_w = np.diag([l ** (s + 1.5), l ** (s + 1.0)])
        in_w = np.diag([l ** -s, l ** (0.5 - s)])
        worst = max(worst, float(np.linalg.norm(out_w @ inv @ in_w, 2)))
    return worst
