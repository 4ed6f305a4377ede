"""Direct form of the evolution equations and a fixed-step RK4 integrator.

The right-hand side is evaluated from the kinematic and dynamic boundary
conditions written pointwise on the grid::

    dh/dt   = J/(1+h) G(h)psi
    dpsi/dt = (G(h)psi + <grad psi, grad h>/((1+h)J))^2 / 2
              - |grad psi|^2 / (2 (1+h)^2) - sigma0 H(h)

Explicit RK4 is only conditionally stable: the capillary dispersion grows like
``sigma0^(1/2) l^(3/2)``, so ``dt`` must shrink roughly like ``lmax^(-3/2)``.
At ``lmax = 16`` and ``sigma0 = 1`` a step of ``1e-3`` is comfortably stable.
"""

from dataclasses import dataclass, field
import os

import numpy as np

from .dno import DnoOptions, solve_dno
from .errors import DomainDegenerate, InvalidArgument
from .geometry import build_geometry, mean_curvature, volume
from .hamiltonian import energy
from .io import read_json, write_csv, write_json
from .sphgrid import SphCoeffs, degrees, get_basis, sobolev_norm
from .state import SurfaceState

__all__ = [
    "TRAJECTORY_COLUMNS",
    "DEFAULT_DYNAMICS_OPTIONS",
    "Trajectory",
    "rhs",
    "step_rk4",
    "spectral_filter",
    "diagnostics",
    "evolve",
    "write_trajectory_csv",
    "read_checkpoint",
]

TRAJECTORY_COLUMNS = (
    "t", "energy", "kinetic", "potential", "volume",
    "bary_x", "bary_y", "bary_z", "h_norm_H2", "psi_norm_H1",
)

# Time stepping needs a tighter DN tolerance than single evaluations so that
# the solver error stays below the conservation targets.
DEFAULT_DYNAMICS_OPTIONS = DnoOptions(tol=1e-13)


def _mean_free(c):
    out = c.copy()
    out.data[0] = 0.0
    return out


def rhs(state, opts=None, basis=None):
    """Time derivative ``(dh/dt, dpsi/dt)`` of a state as coefficient vectors.

    ``G(h)`` annihilates constants, so the Dirichlet-Neumann solve is done on
    the mean-free part of ``psi``; the constant mode itself only enters through
    ``dpsi/dt`` being unchanged by it.
    """
    b = basis if basis is not None else get_basis(max(state.lmax, 1))
    opts = opts if opts is not None else DEFAULT_DYNAMICS_OPTIONS
    psi = _mean_free(state.psi.resized(b.lmax))
    res = solve_dno(state.h, psi, opts, b)
    geo = res.geometry
    a, J = geo.one_plus_h, geo.J
    G = res.G_grid
    gt, gp = b.gradient_frame(psi)
    dot = gt * geo.grad_h_frame[0] + gp * geo.grad_h_frame[1]
    gsq = gt * gt + gp * gp
    dh = J / a * G
    dpsi = (0.5 * (G + dot / (a * J)) ** 2 - 0.5 * gsq / a ** 2
            - state.sigma0 * mean_curvature(geo))
    return b.analyze(dh), b.analyze(dpsi)


def _axpy(state, k, dt):
    return SurfaceState(state.h + dt * k[0], state.psi + dt * k[1], state.sigma0)


def step_rk4(state, dt, opts=None, basis=None, field_fn=None):
    """One classical fourth-order Runge-Kutta step.

    Parameters
    ----------
    state : SurfaceState
    dt : float
        Positive step.
    field_fn : callable, optional
        Replacement for :func:`rhs` with the same signature
        ``field_fn(state, opts, basis)``.
    """
    dt = float(dt)
    if not (dt > 0 and np.isfinite(dt)):
        raise InvalidArgument(f"time step must be positive and finite, got {dt}")
    f = field_fn if field_fn is not None else rhs
    k1 = f(state, opts, basis)
    k2 = f(_axpy(state, k1, 0.5 * dt), opts, basis)
    k3 = f(_axpy(state, k2, 0.5 * dt), opts, basis)
    k4 = f(_axpy(state, k3, dt), opts, basis)
    dh = (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) * (dt / 6.0)
    dpsi = (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) * (dt / 6.0)
    return SurfaceState(state.h + dh, state.psi + dpsi, state.sigma0)


def spectral_filter(c, strength=36.0, order=8):
    """Exponential filter acting on the top third of the degrees."""
    L = c.lmax
    l = degrees(L).astype(float)
    lc = 2.0 * L / 3.0
    x = np.clip((l - lc) / max(L - lc, 1e-300), 0.0, None)
    return SphCoeffs(L, c.data * np.exp(-strength * x ** order))


def diagnostics(state, t, opts=None, basis=None):
    """One diagnostics row keyed by :data:`TRAJECTORY_COLUMNS`.

    The energy is evaluated on the mean-free potential; this equals the
    energy of the full state because ``G(h)`` kills constants, but avoids
    multiplying the accumulated constant mode into solver rounding.
    The constant mode is reported separately under ``psi_mean``.
    """
    b = basis if basis is not None else get_basis(max(state.lmax, 1))
    opts = opts if opts is not None else DEFAULT_DYNAMICS_OPTIONS
    e = energy(state.replace(psi=_mean_free(state.psi)), opts, b)
    geo = build_geometry(state.h, b)
    w = geo.one_plus_h ** 4 / 4.0
    bary = [float(b.integrate(b.e_r[i] * w)) for i in range(3)]
    return {
        "t": float(t),
        "energy": e.total,
        "kinetic": e.kinetic,
        "potential": e.potential,
        "volume": volume(geo),
        "bary_x": bary[0],
        "bary_y": bary[1],
        "bary_z": bary[2],
        "h_norm_H2": sobolev_norm(state.h, 2.0),
        "psi_norm_H1": sobolev_norm(state.psi, 1.0),
        "psi_mean": float(state.psi.data[0]) / np.sqrt(4.0 * np.pi),
    }


@dataclass
class Trajectory:
    """Recorded states and diagnostics of a run.

    ``error`` holds the exception that stopped the run early (``None`` when
    the final time was reached).
    """

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    error: Exception = None

    @property
    def completed(self):
        return self.error is None

    def column(self, name):
        return np.array([row[name] for row in self.diagnostics])

    def relative_drift(self, name):
        """``max |q(t) - q(0)| / |q(0)|`` for a diagnostics column."""
        q = self.column(name)
        return float(np.max(np.abs(q - q[0])) / abs(q[0]))


def _checkpoint(directory, index, t, state):
    path = os.path.join(directory, f"state_{index:06d}.json")
    obj = {"t": float(t)}
    obj.update(state.to_dict())
    write_json(path, obj)
    return path


def read_checkpoint(path):
    """Load a checkpoint written by :func:`evolve`; returns ``(t, state)``."""
    obj = read_json(path)
    return float(obj.get("t", 0.0)), SurfaceState.from_dict(obj)


def evolve(state, T, dt, record_every=1, opts=None, basis=None, checkpoint_dir=None,
           use_filter=False, with_diagnostics=True, field_fn=None):
    """Integrate from ``t = 0`` to ``t = T`` with fixed steps.

    The run takes ``n = round(T/dt)`` equal steps of length ``T/n`` so that
    it ends exactly at ``T``.

    Parameters
    ----------
    state : SurfaceState
    T, dt : float
        Final time and nominal step, both positive.
    record_every : int
        Record a state (and diagnostics row) every this many steps.  The
        initial and final states are always recorded.
    checkpoint_dir : str, optional
        If given, each recorded state is written there as JSON.
    use_filter : bool
        Apply :func:`spectral_filter` after every step (off by default).

    Returns
    -------
    Trajectory
        If the surface stops being star-shaped the run stops, and the
        partial trajectory is returned with ``error`` set.
    """
    T, dt = float(T), float(dt)
    if not (T > 0 and np.isfinite(T)):
        raise InvalidArgument(f"final time must be positive and finite, got {T}")
    if not (dt > 0 and np.isfinite(dt)):
        raise InvalidArgument(f"time step must be positive and finite, got {dt}")
    record_every = int(record_every)
    if record_every < 1:
        raise InvalidArgument("record_every must be >= 1")
    b = basis if basis is not None else get_basis(max(state.lmax, 1))
    state = SurfaceState(state.h.resized(b.lmax), state.psi.resized(b.lmax), state.sigma0)
    nsteps = max(1, int(round(T / dt)))
    h_step = T / nsteps
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)

    traj = Trajectory()

    def record(t, s):
        # diagnostics first: a degenerate state must not leave misaligned rows
        row = diagnostics(s, t, opts, b) if with_diagnostics else None
        traj.times.append(t)
        traj.states.append(s)
        if with_diagnostics:
            traj.diagnostics.append(row)
        if checkpoint_dir is not None:
            _checkpoint(checkpoint_dir, len(traj.times) - 1, t, s)

    try:
        record(0.0, state)
        for k in range(1, nsteps + 1):
            state = step_rk4(state, h_step, opts, b, field_fn)
            if use_filter:
                state = state.replace(h=spectral_filter(state.h), psi=spectral_filter(state.psi))
            if k % record_every == 0 or k == nsteps:
                record(k * h_step, state)
    except DomainDegenerate as exc:
        traj.error = exc
    return traj


def write_trajectory_csv(path, traj):
    """Write the diagnostics of ``traj`` with the standard column names."""
    rows = [[row[c] for c in TRAJECTORY_COLUMNS] for row in traj.diagnostics]
    write_csv(path, TRAJECTORY_COLUMNS, rows)
