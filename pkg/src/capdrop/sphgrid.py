"""Real spherical harmonics on a Gauss-Legendre x uniform-longitude grid.

The basis is written in Cartesian form.  For ``0 <= m <= l``::

    phi_{l,0}(x)  = c_l^(0) P_l(x3)
    phi_{l,m}(x)  = c_l^(m) P_l^(m)(x3) Re[(x1 + i x2)^m]
    phi_{l,-m}(x) = c_l^(m) P_l^(m)(x3) Im[(x1 + i x2)^m]

where ``P_l^(m)`` is the m-th derivative of the Legendre polynomial.  On the
sphere ``(x1 + i x2)^m = sin(theta)^m exp(i m phi)``, so ``phi_{l,m}`` is the
usual real harmonic without the Condon-Shortley sign.  The normalizers are

    c_l^(0) = sqrt((2l+1) / (4 pi))
    c_l^(m) = sqrt((2l+1) / (2 pi) * (l-m)! / (l+m)!),   m >= 1,

which makes the family orthonormal in L^2(S^2) with the surface measure.

Tangential derivatives are evaluated nodewise from analytic recurrences in
(theta, phi) and converted to Cartesian components, so gradient and Hessian
values at the nodes carry no aliasing error.

Coefficients are stored in a flat vector with index ``l*l + l + m``.
"""

from fractions import Fraction
from functools import lru_cache
import json
import math

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "DEFAULT_PAD",
    "SphCoeffs",
    "BasisTable",
    "build_basis",
    "get_basis",
    "coeff_index",
    "ncoeffs",
    "degrees",
    "orders",
    "laplace_beltrami",
    "sobolev_norm",
    "rotate_z",
]

DEFAULT_PAD = Fraction(3, 2)


def ncoeffs(lmax):
    """Number of coefficients in the triangle ``0 <= l <= lmax``."""
    return (lmax + 1) ** 2


def coeff_index(l, m):
    """Flat index of the (l, m) coefficient."""
    return l * l + l + m


@lru_cache(maxsize=None)
def _degree_order(lmax):
    ls = np.repeat(np.arange(lmax + 1), 2 * np.arange(lmax + 1) + 1)
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(lmax + 1)])
    ls.setflags(write=False)
    ms.setflags(write=False)
    return ls, ms


def degrees(lmax):
    """Degree l of every flat index (read-only array)."""
    return _degree_order(lmax)[0]


def orders(lmax):
    """Order m of every flat index (read-only array)."""
    return _degree_order(lmax)[1]


class SphCoeffs:
    """Real coefficients on the triangle ``0 <= l <= lmax, |m| <= l``.

    Parameters
    ----------
    lmax : int
        Truncation degree.
    data : array_like, optional
        Flat coefficient vector of length ``(lmax+1)**2``; zeros if omitted.
    """

    __slots__ = ("lmax", "data")

    def __init__(self, lmax, data=None):
        lmax = int(lmax)
        if lmax < 0:
            raise InvalidArgument(f"lmax must be non-negative, got {lmax}")
        n = ncoeffs(lmax)
        if data is None:
            arr = np.zeros(n)
        else:
            arr = np.array(data, dtype=float).reshape(-1)
            if arr.size != n:
                raise InvalidArgument(
                    f"coefficient vector has {arr.size} entries, expected {n} for lmax={lmax}")
        self.lmax = lmax
        self.data = arr

    # construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, lmax):
        return cls(lmax)

    @classmethod
    def delta(cls, lmax, l, m, amplitude=1.0):
        """Single mode ``amplitude * phi_{l,m}``."""
        if not (0 <= l <= lmax and -l <= m <= l):
            raise InvalidArgument(f"mode ({l},{m}) outside triangle of lmax={lmax}")
        c = cls(lmax)
        c.data[coeff_index(l, m)] = amplitude
        return c

    @classmethod
    def constant(cls, lmax, value):
        """Coefficients of the constant function ``value``."""
        return cls.delta(lmax, 0, 0, value * math.sqrt(4.0 * math.pi))

    def copy(self):
        return SphCoeffs(self.lmax, self.data.copy())

    def resized(self, lmax):
        """Zero-pad or truncate to a new degree."""
        out = SphCoeffs(lmax)
        n = ncoeffs(min(lmax, self.lmax))
        out.data[:n] = self.data[:n]
        return out

    # element access -------------------------------------------------------
    def __getitem__(self, lm):
        l, m = lm
        if not (0 <= l <= self.lmax and -l <= m <= l):
            return 0.0
        return float(self.data[coeff_index(l, m)])

    def __setitem__(self, lm, value):
        l, m = lm
        if not (0 <= l <= self.lmax and -l <= m <= l):
            raise InvalidArgument(f"mode ({l},{m}) outside triangle of lmax={self.lmax}")
        self.data[coeff_index(l, m)] = value

    def items(self):
        """Iterate over ``(l, m, value)`` triples."""
        ls, ms = _degree_order(self.lmax)
        for l, m, v in zip(ls, ms, self.data):
            yield int(l), int(m), float(v)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if not isinstance(other, SphCoeffs):
            return NotImplemented
        lmax = max(self.lmax, other.lmax)
        return self.resized(lmax).data, other.resized(lmax).data, lmax

    def __add__(self, other):
        res = self._coerce(other)
        if res is NotImplemented:
            return res
        a, b, lmax = res
        return SphCoeffs(lmax, a + b)

    def __sub__(self, other):
        res = self._coerce(other)
        if res is NotImplemented:
            return res
        a, b, lmax = res
        return SphCoeffs(lmax, a - b)

    def __mul__(self, scalar):
        if isinstance(scalar, SphCoeffs):
            return NotImplemented
        return SphCoeffs(self.lmax, self.data * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SphCoeffs(self.lmax, self.data / float(scalar))

    def __neg__(self):
        return SphCoeffs(self.lmax, -self.data)

    def __repr__(self):
        nz = int(np.count_nonzero(self.data))
        return f"SphCoeffs(lmax={self.lmax}, nonzero={nz})"

    def norm(self):
        """L^2(S^2) norm (Euclidean norm of the coefficients)."""
        return float(np.linalg.norm(self.data))

    # serialization --------------------------------------------------------
    def to_dict(self, drop_zeros=True):
        coeffs = [[l, m, v] for l, m, v in self.items() if v != 0.0 or not drop_zeros]
        return {"lmax": self.lmax, "coeffs": coeffs}

    @classmethod
    def from_dict(cls, obj):
        try:
            lmax = int(obj["lmax"])
            entries = obj.get("coeffs", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed SphCoeffs object: {exc}") from None
        out = cls(lmax)
        for entry in entries:
            if len(entry) != 3:
                raise InvalidArgument(f"coefficient entry must be [l, m, value], got {entry!r}")
            l, m, v = entry
            if int(l) != l or int(m) != m:
                raise InvalidArgument(f"non-integer mode index in {entry!r}")
            v = float(v)
            if not math.isfinite(v):
                raise InvalidArgument(f"non-finite coefficient in {entry!r}")
            out[int(l), int(m)] = v
        return out

    def to_json(self):
        from .io import dumps
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"invalid JSON: {exc}") from None
        return cls.from_dict(obj)


def laplace_beltrami(c):
    """Apply the Laplace-Beltrami operator of the unit sphere spectrally."""
    l = degrees(c.lmax)
    return SphCoeffs(c.lmax, -l * (l + 1.0) * c.data)


def sobolev_norm(c, s):
    """Spectral H^s norm ``(|c00|^2 + sum_{l>=1} l^(2s) |c_lm|^2)^(1/2)``."""
    s = float(s)
    if not math.isfinite(s) or s < 0:
        raise InvalidArgument(f"Sobolev index must be finite and >= 0, got {s}")
    l = degrees(c.lmax).astype(float)
    w = np.where(l == 0, 1.0, l ** (2.0 * s))
    return float(np.sqrt(np.sum(w * c.data ** 2)))


def rotate_z(c, theta):
    """Coefficients of ``x -> f(R(theta) x)`` for a rotation about the x3 axis.

    ``R(theta)`` turns the azimuth forward by ``theta``, so the order-``m``
    pair ``(c_m, c_-m)`` rotates by the angle ``m theta``.
    """
    theta = float(theta)
    m = orders(c.lmax)
    out = c.data.copy()
    pos = np.nonzero(m > 0)[0]
    neg = pos - 2 * m[pos]
    cm, sm = np.cos(m[pos] * theta), np.sin(m[pos] * theta)
    a, b = c.data[pos], c.data[neg]
    out[pos] = a * cm + b * sm
    out[neg] = -a * sm + b * cm
    return SphCoeffs(c.lmax, out)


def _normalized_legendre(x, lmax):
    """Orthonormal associated Legendre values ``Q[t, l, m]`` for ``m >= 0``.

    ``Q_{l,m}(cos theta) * trig(m phi)`` is an orthonormal harmonic, where the
    trig factor is 1 for m = 0 and cos or sin otherwise.  Uses the standard
    normalized three-term recurrence, seeded on the diagonal.
    """
    nt = x.size
    s = np.sqrt((1.0 - x) * (1.0 + x))
    y = np.zeros((nt, lmax + 1, lmax + 1))
    y[:, 0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, lmax + 1):
        y[:, m, m] = y[:, m - 1, m - 1] * math.sqrt((2 * m + 1) / (2.0 * m)) * s
    for m in range(0, lmax):
        y[:, m + 1, m] = math.sqrt(2 * m + 3) * x * y[:, m, m]
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            y[:, l, m] = a * (x * y[:, l - 1, m] - b * y[:, l - 2, m])
    y[:, :, 1:] *= math.sqrt(2.0)
    return y


def _normalizers(lmax):
    """The constants c_l^(m) of the Cartesian basis, shape (lmax+1, lmax+1)."""
    c = np.zeros((lmax + 1, lmax + 1))
    for l in range(lmax + 1):
        for m in range(l + 1):
            logratio = math.lgamma(l - m + 1) - math.lgamma(l + m + 1)
            base = (2 * l + 1) / (4.0 * math.pi) if m == 0 else (2 * l + 1) / (2.0 * math.pi)
            c[l, m] = math.sqrt(base * math.exp(logratio))
    return c


class BasisTable:
    """Quadrature grid and tabulated basis for a given truncation degree.

    Parameters
    ----------
    lmax : int
        Largest degree represented by coefficient vectors on this table.
    pad : rational
        Grid oversampling factor; ``N_theta = ceil(pad*(lmax+1))`` and
        ``N_phi = ceil(pad*(2*lmax+1))``.

    Notes
    -----
    Instances are immutable; all arrays are flagged read-only.  Scalar grid
    fields have shape ``(N_theta, N_phi)``; Cartesian vector fields have a
    leading axis of length 3.  Rows are ordered by increasing colatitude.
    """

    def __init__(self, lmax, pad=DEFAULT_PAD):
        lmax = int(lmax)
        if lmax < 1:
            raise InvalidArgument(f"lmax must be >= 1, got {lmax}")
        pad = Fraction(pad).limit_denominator(10 ** 6)
        if pad < 1:
            raise InvalidArgument(f"pad must be >= 1, got {pad}")
        self.lmax = lmax
        self.pad = pad
        self.ntheta = math.ceil(pad * (lmax + 1))
        self.nphi = math.ceil(pad * (2 * lmax + 1))
        self.shape = (self.ntheta, self.nphi)
        self.ncoef = ncoeffs(lmax)

        xg, wg = np.polynomial.legendre.leggauss(self.ntheta)
        order = np.argsort(-xg)  # north to south
        self.cos_theta = xg[order]
        self.weights = wg[order]
        self.theta = np.arccos(self.cos_theta)
        self.sin_theta = np.sqrt((1.0 - self.cos_theta) * (1.0 + self.cos_theta))
        self.phi = 2.0 * math.pi * np.arange(self.nphi) / self.nphi
        self.normalizer = _normalizers(lmax)

        L = lmax
        s = self.sin_theta[:, None, None]
        cot = (self.cos_theta / self.sin_theta)[:, None, None]
        Q = np.zeros((self.ntheta, L + 1, L + 2))
        Q[:, :, : L + 1] = _normalized_legendre(self.cos_theta, L)
        mvals = np.arange(L + 2)[None, None, :]
        lvals = np.arange(L + 1)[None, :, None]
        kappa = np.sqrt(np.clip((lvals - mvals) * (lvals + mvals + 1.0), 0.0, None))
        kappa = kappa * np.where(mvals == 0, 1.0 / math.sqrt(2.0), 1.0)
        Qnext = np.zeros_like(Q)
        Qnext[:, :, :-1] = Q[:, :, 1:]
        dQ = mvals * cot * Q - kappa * Qnext
        dQnext = np.zeros_like(dQ)
        dQnext[:, :, :-1] = dQ[:, :, 1:]
        d2Q = -mvals / s ** 2 * Q + mvals * cot * dQ - kappa * dQnext
        Q, dQ, d2Q = Q[:, :, :-1], dQ[:, :, :-1], d2Q[:, :, :-1]
        mv = mvals[:, :, :-1]
        self.legendre = Q

        # signed-order layout: axis 0 runs over m = -L..L
        mabs = np.abs(np.arange(-L, L + 1))

        def signed(arr):
            return np.ascontiguousarray(np.transpose(arr[:, :, mabs], (2, 0, 1)))

        self._k_val = signed(Q)
        self._k_dth = signed(dQ)
        self._k_ds = signed(Q / s)
        self._k_tt = signed(d2Q)
        self._k_tp = signed((dQ - cot * Q) / s)
        self._k_pp = signed(cot * dQ - mv ** 2 * Q / s ** 2)

        msig = np.arange(-L, L + 1)[:, None]
        ph = self.phi[None, :]
        self._trig = np.where(msig >= 0, np.cos(msig * ph), np.sin(-msig * ph))
        self._dtrig = np.where(msig >= 0, -msig * np.sin(msig * ph), -msig * np.cos(-msig * ph))
        self._trig_w = self._trig * (2.0 * math.pi / self.nphi)
        self._dtrig_w = self._dtrig * (2.0 * math.pi / self.nphi)

        idx = np.full((2 * L + 1, L + 1), self.ncoef, dtype=np.intp)
        for l in range(L + 1):
            for m in range(-l, l + 1):
                idx[m + L, l] = coeff_index(l, m)
        self._gather = idx
        valid = idx < self.ncoef
        self._scatter_src = np.nonzero(valid)
        self._scatter_dst = idx[valid]

        ct = self.cos_theta[:, None]
        st = self.sin_theta[:, None]
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        self.e_r = np.stack([st * cp, st * sp, ct * np.ones_like(cp)])
        self.e_theta = np.stack([ct * cp, ct * sp, -st * np.ones_like(cp)])
        self.e_phi = np.stack([-sp * np.ones_like(ct), cp * np.ones_like(ct), np.zeros(self.shape)])
        self.area_weights = self.weights[:, None] * np.full((1, self.nphi), 2.0 * math.pi / self.nphi)

        for name, val in list(vars(self).items()):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)

    # ------------------------------------------------------------------
    @property
    def points(self):
        """Cartesian coordinates of the nodes, shape (3, N_theta, N_phi)."""
        return self.e_r

    def _as_array(self, c):
        if isinstance(c, SphCoeffs):
            if c.lmax > self.lmax:
                raise InvalidArgument(
                    f"coefficients of degree {c.lmax} exceed table degree {self.lmax}")
            if c.lmax == self.lmax:
                return c.data
            return c.resized(self.lmax).data
        arr = np.asarray(c, dtype=float)
        if arr.shape[-1] != self.ncoef:
            raise InvalidArgument(
                f"coefficient array has trailing size {arr.shape[-1]}, expected {self.ncoef}")
        return arr

    def _check_grid(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise InvalidArgument(f"grid field shape {f.shape} does not match table grid {self.shape}")
        return f

    def _to_signed(self, arr):
        batch = arr.shape[:-1]
        flat = arr.reshape(-1, self.ncoef)
        ext = np.concatenate([flat, np.zeros((flat.shape[0], 1))], axis=1)
        cm = ext[:, self._gather]  # (K, M, L+1)
        return np.ascontiguousarray(np.transpose(cm, (1, 2, 0))), batch

    def _synth(self, arr, pairs):
        cm, batch = self._to_signed(arr)
        out = []
        for kern, trig in pairs:
            b = np.matmul(kern, cm)  # (M, t, K)
            g = np.tensordot(b, trig, axes=([0], [0]))  # (t, K, p)
            out.append(np.moveaxis(g, 1, 0).reshape(batch + self.shape))
        return out

    def _analyze(self, pairs, lmax=None):
        batch = None
        acc = None
        for field, kern, trig in pairs:
            f = self._check_grid(field)
            batch = f.shape[:-2]
            flat = f.reshape((-1,) + self.shape)
            a = np.tensordot(flat, trig, axes=([2], [1]))  # (K, t, M)
            a = a * self.weights[None, :, None]
            a = np.ascontiguousarray(np.transpose(a, (2, 1, 0)))  # (M, t, K)
            c = np.matmul(np.transpose(kern, (0, 2, 1)), a)  # (M, l, K)
            acc = c if acc is None else acc + c
        out = np.zeros((acc.shape[2], self.ncoef))
        out[:, self._scatter_dst] = np.transpose(acc[self._scatter_src[0], self._scatter_src[1], :])
        out = out.reshape(batch + (self.ncoef,))
        if lmax is not None and lmax < self.lmax:
            out = out[..., : ncoeffs(lmax)]
        return out

    # transforms ---------------------------------------------------------
    def synthesize(self, c):
        """Grid values of a coefficient vector (or batch of them)."""
        arr = self._as_array(c)
        return self._synth(arr, [(self._k_val, self._trig)])[0]

    def analyze_array(self, field, lmax=None):
        """Quadrature projection onto the basis, keeping batch axes."""
        return self._analyze([(field, self._k_val, self._trig_w)], lmax)

    def analyze(self, field, lmax=None):
        """Project a scalar grid field onto the basis up to ``lmax``."""
        field = self._check_grid(field)
        if field.ndim != 2:
            raise InvalidArgument(f"analyze expects a scalar field, got shape {field.shape}")
        lm = self.lmax if lmax is None else min(int(lmax), self.lmax)
        return SphCoeffs(lm, self.analyze_array(field, lm))

    def analyze_weak(self, radial, t_theta, t_phi, lmax=None):
        """Coefficients of ``int (radial*phi + t . grad phi) dsigma``.

        ``t_theta`` and ``t_phi`` are frame components of a tangent field.
        Used to project divergence-form data without differentiating it.
        """
        return self._analyze([(radial, self._k_val, self._trig_w),
                              (t_theta, self._k_dth, self._trig_w),
                              (t_phi, self._k_ds, self._dtrig_w)], lmax)

    def integrate(self, field):
        """Surface integral over the unit sphere by the tensor quadrature."""
        f = self._check_grid(field)
        return np.tensordot(f, self.area_weights, axes=([-2, -1], [0, 1]))

    # tangential calculus ------------------------------------------------
    def gradient_frame(self, c):
        """(theta, phi) frame components of the tangential gradient."""
        arr = self._as_array(c)
        gt, gp = self._synth(arr, [(self._k_dth, self._trig), (self._k_ds, self._dtrig)])
        return gt, gp

    def values_and_gradient_frame(self, c):
        arr = self._as_array(c)
        return tuple(self._synth(arr, [(self._k_val, self._trig),
                                       (self._k_dth, self._trig),
                                       (self._k_ds, self._dtrig)]))

    def frame_to_cartesian(self, t_theta, t_phi):
        """Cartesian components of a tangent field given in the frame."""
        return (np.expand_dims(t_theta, -3) * self.e_theta
                + np.expand_dims(t_phi, -3) * self.e_phi)

    def cartesian_to_frame(self, v):
        """Components of a Cartesian vector field in the spherical frame, radial first."""
        v = np.asarray(v)
        r = np.sum(v * self.e_r, axis=-3)
        t = np.sum(v * self.e_theta, axis=-3)
        p = np.sum(v * self.e_phi, axis=-3)
        return r, t, p

    def gradient(self, c):
        """Tangential gradient, Cartesian components, shape (..., 3, Nt, Np)."""
        gt, gp = self.gradient_frame(c)
        return self.frame_to_cartesian(gt, gp)

    def hessian_frame(self, c):
        """Covariant Hessian components (H_tt, H_tp, H_pp) in the frame."""
        arr = self._as_array(c)
        return tuple(self._synth(arr, [(self._k_tt, self._trig),
                                       (self._k_tp, self._dtrig),
                                       (self._k_pp, self._trig)]))

    def hessian_matrix(self, c):
        """Cartesian matrix of the tangential Hessian ``D(grad f)``.

        Shape (3, 3, Nt, Np).  The value equals ``H_tan - x (grad f)^T`` where
        ``H_tan`` is the covariant Hessian embedded in the tangent plane; the
        second term is the normal part produced by differentiating the
        homogeneous extension of the gradient.
        """
        htt, htp, hpp = self.hessian_frame(c)
        grad = self.gradient(c)
        et, ep = self.e_theta, self.e_phi
        H = (htt * et[:, None] * et[None, :]
             + hpp * ep[:, None] * ep[None, :]
             + htp * (et[:, None] * ep[None, :] + ep[:, None] * et[None, :]))
        return H - self.e_r[:, None] * grad[None, :]

    def hessian_apply(self, c, w):
        """Action ``D^2 f . w`` of the tangential Hessian on a Cartesian field."""
        w = self._check_grid(w)
        htt, htp, hpp = self.hessian_frame(c)
        gt, gp = self.gradient_frame(c)
        wr, wt, wp = self.cartesian_to_frame(w)
        out_t = htt * wt + htp * wp
        out_p = htp * wt + hpp * wp
        out_r = -(gt * wt + gp * wp)
        return out_r * self.e_r + out_t * self.e_theta + out_p * self.e_phi

    def hessian_quadratic_form(self, c, u, v):
        """``<D^2 f . u, v>`` nodewise."""
        return np.sum(self.hessian_apply(c, u) * self._check_grid(v), axis=0)

    def hessian_trace(self, c):
        htt, _, hpp = self.hessian_frame(c)
        return htt + hpp

    def tangential_divergence(self, v, lmax=None):
        """Trace of the tangential differential of a Cartesian vector field.

        Each component is analyzed to degree ``lmax`` (default: table degree)
        and differentiated spectrally; the result is a grid field.
        """
        v = self._check_grid(v)
        comps = self.analyze_array(v, lmax)  # (3, ncoef')
        if lmax is not None and lmax < self.lmax:
            comps = np.concatenate(
                [comps, np.zeros((3, self.ncoef - comps.shape[-1]))], axis=-1)
        grads = self.gradient(comps)  # (3 comps, 3 dirs, ...)
        return grads[0, 0] + grads[1, 1] + grads[2, 2]

    def angular_momentum(self, c):
        """Grid values of ``(x1 d2 - x2 d1) f``, i.e. ``<J x, grad f>``."""
        g = self.gradient(c)
        x = self.e_r
        return x[0] * g[1] - x[1] * g[0]


@lru_cache(maxsize=64)
def _cached_basis(lmax, pad):
    return BasisTable(lmax, pad)


def build_basis(lmax, pad=DEFAULT_PAD):
    """Build (or fetch from cache) the quadrature table for ``lmax``."""
    if int(lmax) != lmax or lmax < 1:
        raise InvalidArgument(f"lmax must be an integer >= 1, got {lmax}")
    return _cached_basis(int(lmax), Fraction(pad).limit_denominator(10 ** 6))


get_basis = build_basis
