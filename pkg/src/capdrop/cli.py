"""Command-line interface.

Every run is fully described by its flags plus an optional JSON config file
whose keys are the long flag names with dashes turned into underscores.
Flags given on the command line override the file.

Exit codes: 0 success, 2 invalid input, 3 solver or continuation failure,
4 surface no longer star-shaped, 5 non-simple kernel or range violation.
"""

import argparse
from dataclasses import dataclass
import math
import sys

import numpy as np

from .dno import DnoOptions, solve_dno
from .errors import (ConvergenceFailure, ContinuationFailure, DomainDegenerate,
                     InvalidArgument, NotSimple, RangeViolation)
from .io import format_float, read_json, write_csv
from .sphgrid import SphCoeffs, degrees, get_basis
from .state import SurfaceState

__all__ = ["RunConfig", "parse_field_spec", "build_parser", "dispatch", "main"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3
EXIT_DOMAIN = 4
EXIT_NOT_SIMPLE = 5


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by the subcommands."""

    lmax: int = 16
    sigma0: float = 1.0
    dno_tol: float = 1e-12
    newton_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if int(self.lmax) != self.lmax or self.lmax < 4:
            raise InvalidArgument(f"lmax must be an integer >= 4, got {self.lmax}")
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise InvalidArgument(f"sigma must be positive, got {self.sigma0}")
        for name in ("dno_tol", "newton_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidArgument(f"{name} must be positive, got {v}")

    @property
    def dno_options(self):
        return DnoOptions(tol=self.dno_tol)


def parse_field_spec(spec, lmax):
    """Build coefficients from ``zero | const:V | ylm:L,M[,AMP] | file:PATH``."""
    if not isinstance(spec, str) or not spec:
        raise InvalidArgument(f"empty field spec {spec!r}")
    kind, _, arg = spec.partition(":")
    try:
        if kind == "zero" and not arg:
            return SphCoeffs(lmax)
        if kind == "const":
            return SphCoeffs.constant(lmax, float(arg))
        if kind == "ylm":
            parts = arg.split(",")
            if len(parts) not in (2, 3):
                raise ValueError("expected L,M[,AMP]")
            l, m = int(parts[0]), int(parts[1])
            amp = float(parts[2]) if len(parts) == 3 else 1.0
            if not 0 <= l <= lmax or abs(m) > l:
                raise ValueError(f"need 0 <= |m| <= l <= lmax={lmax}")
            if not math.isfinite(amp):
                raise ValueError("amplitude must be finite")
            return SphCoeffs.delta(lmax, l, m, amp)
        if kind == "file" and arg:
            return SphCoeffs.from_dict(read_json(arg)).resized(lmax)
    except ValueError as exc:
        raise InvalidArgument(f"bad field spec {spec!r}: {exc}") from None
    raise InvalidArgument(f"bad field spec {spec!r}; expected zero, const:V, ylm:L,M[,AMP] "
                          "or file:PATH")


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _common(p, *names):
    opt = {
        "lmax": dict(type=int, help="truncation degree (>= 4, default 16)"),
        "sigma": dict(type=float, help="capillarity sigma0 (default 1)"),
        "dno_tol": dict(type=float, help="Dirichlet-Neumann solver tolerance"),
        "newton_tol": dict(type=float, help="Newton tolerance for branches"),
        "seed": dict(type=int, help="seed for randomized inputs (default 0)"),
    }
    for n in names:
        p.add_argument("--" + n.replace("_", "-"), dest=n, default=None, **opt[n])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="capdrop",
        description="Spectral solver for capillary drops: Dirichlet-Neumann checks, "
                    "energies, time evolution, resonances and travelling-wave branches.")
    parser.add_argument("--config", default=None, help="JSON file with default flag values")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on BLAS/OpenMP threads (default: hardware count)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("resonances", help="resonance set of a critical mode")
    p.add_argument("--l0", type=int, default=None)
    p.add_argument("--m0", type=int, default=None)
    p.add_argument("--json", default=None, help="write the report to this file")
    _common(p, "sigma")

    p = sub.add_parser("dispersion", help="table of det L_{l,m} for |m| <= l <= lmax")
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--csv", default=None, help="output file (default: standard output)")
    _common(p, "sigma", "lmax")

    p = sub.add_parser("dno-check", help="evaluate G(h)psi and compare with exact cases")
    p.add_argument("--h", default=None, help="elevation spec (default zero)")
    p.add_argument("--psi", default=None, help="potential spec (default ylm:2,0)")
    _common(p, "lmax", "dno_tol")

    p = sub.add_parser("deriv-check", help="finite-difference check of the shape derivative")
    p.add_argument("--eps", type=float, default=None, help="largest step (default 1e-2)")
    p.add_argument("--h", default=None, help="elevation spec (default zero)")
    p.add_argument("--psi", default=None, help="potential spec (default ylm:3,2)")
    p.add_argument("--eta", default=None, help="direction spec (default: seeded random field)")
    _common(p, "lmax", "dno_tol", "seed")

    p = sub.add_parser("energy", help="energy of a stored state")
    p.add_argument("--state", default=None, help="state JSON {sigma0, h, psi}")
    _common(p, "lmax", "dno_tol")

    p = sub.add_parser("evolve", help="RK4 time evolution with conservation diagnostics")
    p.add_argument("--init", default=None, help="initial state JSON {sigma0, h, psi}")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-final", dest="t_final", type=float, default=None)
    p.add_argument("--out", default=None, help="trajectory CSV")
    p.add_argument("--record-every", dest="record_every", type=int, default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None,
                   help="write a state JSON every N steps")
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=None)
    p.add_argument("--filter", dest="filter", action="store_const", const=True, default=None,
                   help="apply the exponential spectral filter after each step")
    _common(p, "lmax", "dno_tol")

    p = sub.add_parser("branch", help="continue a travelling-wave branch")
    p.add_argument("--l0", type=int, default=None)
    p.add_argument("--m0", type=int, default=None)
    p.add_argument("--a-max", dest="a_max", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="accepted residual (default 1e-9)")
    p.add_argument("--out", default=None, help="branch JSON")
    _common(p, "sigma", "lmax", "dno_tol", "newton_tol")
    return parser


def _merge(args):
    """Combine config-file values with explicit flags (flags win)."""
    merged = {}
    if args.config is not None:
        cfg = read_json(args.config)
        if not isinstance(cfg, dict):
            raise InvalidArgument("config file must hold a JSON object")
        known = set(vars(args)) - {"config", "command"}
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in known:
                raise InvalidArgument(f"config key {k!r} is not an option of "
                                      f"'{args.command}'")
            merged[key] = v
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command"):
            merged[k] = v
    return merged


def _need(cfg, key, kind=float):
    if cfg.get(key) is None:
        raise InvalidArgument(f"missing required option --{key.replace('_', '-')}")
    try:
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise InvalidArgument(f"option --{key.replace('_', '-')} has invalid value "
                              f"{cfg[key]!r}") from None


def _run_config(cfg, **defaults):
    vals = dict(lmax=16, sigma0=1.0, dno_tol=1e-12, newton_tol=1e-10, seed=0)
    vals.update(defaults)
    if cfg.get("lmax") is not None:
        vals["lmax"] = _need(cfg, "lmax", int)
    if cfg.get("sigma") is not None:
        vals["sigma0"] = _need(cfg, "sigma")
    for k in ("dno_tol", "newton_tol"):
        if cfg.get(k) is not None:
            vals[k] = _need(cfg, k)
    if cfg.get("seed") is not None:
        vals["seed"] = _need(cfg, "seed", int)
    return RunConfig(**vals)


def _emit(pairs, out=None):
    out = out or sys.stdout
    for k, v in pairs:
        if isinstance(v, float):
            v = format_float(v)
        out.write(f"{k},{v}\n")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def _cmd_resonances(cfg):
    from .spectrum import resonance_set

    l0, m0 = _need(cfg, "l0", int), _need(cfg, "m0", int)
    rc = _run_config(cfg)
    rep = resonance_set(l0, m0, rc.sigma0)
    fmt = lambda pts: ",".join(f"({l},{m})" for l, m in pts)
    print(f"l0={rep.l0} m0={rep.m0} c0={rep.c0} omega_star={format_float(rep.omega_star)}")
    print(f"S = {fmt(rep.S)}")
    print(f"S_res = {fmt(rep.S_res)}")
    print(f"simple={'true' if rep.simple else 'false'}")
    if cfg.get("json"):
        rep.write_json(cfg["json"])
    return EXIT_OK


def _cmd_dispersion(cfg):
    from .spectrum import dispersion_det

    omega = _need(cfg, "omega")
    if not math.isfinite(omega):
        raise InvalidArgument("omega must be finite")
    rc = _run_config(cfg)
    rows = [[l, m, dispersion_det(l, m, omega, rc.sigma0)]
            for l in range(rc.lmax + 1) for m in range(0, l + 1)]
    header = ("l", "m", "det")
    if cfg.get("csv"):
        write_csv(cfg["csv"], header, rows)
    else:
        sys.stdout.write(",".join(header) + "\n")
        for l, m, d in rows:
            sys.stdout.write(f"{l},{m},{format_float(d)}\n")
    return EXIT_OK


def _constant_value(c):
    """Return the constant if ``c`` is a constant field, else ``None``."""
    if np.all(c.data[1:] == 0.0):
        return float(c.data[0]) / math.sqrt(4.0 * math.pi)
    return None


def _cmd_dno_check(cfg):
    rc = _run_config(cfg)
    h = parse_field_spec(cfg.get("h") or "zero", rc.lmax)
    psi = parse_field_spec(cfg.get("psi") or "ylm:2,0", rc.lmax)
    res = solve_dno(h, psi, rc.dno_options, get_basis(rc.lmax))
    out = [("iterations", res.iterations), ("G_norm_L2", res.G.norm())]
    c = _constant_value(h)
    if c is not None:
        # on a sphere of radius 1+c every harmonic is an eigenfunction
        l = degrees(rc.lmax).astype(float)
        err = res.G.data - l / (1.0 + c) * psi.data
        out.append(("max_eigenvalue_error", float(np.max(np.abs(err)))))
        out.append(("l2_error", float(np.linalg.norm(err))))
    _emit(out)
    return EXIT_OK


def _random_field(lmax, seed, lcut=6):
    rng = np.random.default_rng(seed)
    c = SphCoeffs(lmax)
    l = degrees(lmax)
    mask = l <= min(lcut, lmax)
    c.data[mask] = rng.standard_normal(int(mask.sum())) * np.exp(-0.5 * l[mask])
    return c * (1.0 / c.norm())


def _cmd_deriv_check(cfg):
    from .shapederiv import fd_defect

    rc = _run_config(cfg)
    eps = float(cfg["eps"]) if cfg.get("eps") is not None else 1e-2
    if not (eps > 0 and math.isfinite(eps)):
        raise InvalidArgument("eps must be positive")
    h = parse_field_spec(cfg.get("h") or "zero", rc.lmax)
    psi = parse_field_spec(cfg.get("psi") or "ylm:3,2", rc.lmax)
    eta = (parse_field_spec(cfg["eta"], rc.lmax) if cfg.get("eta")
           else _random_field(rc.lmax, rc.seed))
    b = get_basis(rc.lmax)
    opts = DnoOptions(tol=min(rc.dno_tol, 1e-13))
    steps = [eps, eps / 2.0, eps / 4.0]
    defects = [fd_defect(h, eta, psi, e, opts, b) for e in steps]
    sys.stdout.write("eps,defect,ratio\n")
    for i, (e, d) in enumerate(zip(steps, defects)):
        ratio = ""
        if i and d > 0:
            ratio = format_float(defects[i - 1] / d)
        sys.stdout.write(f"{format_float(e)},{format_float(d)},{ratio}\n")
    return EXIT_OK


def _load_state(path, lmax):
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise InvalidArgument(f"{path} must hold a JSON object")
    st = SurfaceState.from_dict(obj)
    L = st.lmax if lmax is None else lmax
    return SurfaceState(st.h.resized(L), st.psi.resized(L), st.sigma0)


def _cmd_energy(cfg):
    from .hamiltonian import energy

    path = _need(cfg, "state", str)
    lmax = _need(cfg, "lmax", int) if cfg.get("lmax") is not None else None
    st = _load_state(path, lmax)
    rc = _run_config(cfg, lmax=max(st.lmax, 4), sigma0=st.sigma0)
    e = energy(st, rc.dno_options, get_basis(st.lmax))
    _emit([("kinetic", e.kinetic), ("potential", e.potential), ("total", e.total),
           ("sigma0", e.sigma0)])
    return EXIT_OK


def _cmd_evolve(cfg):
    from .dynamics import evolve, write_trajectory_csv

    path = _need(cfg, "init", str)
    dt, T = _need(cfg, "dt"), _need(cfg, "t_final")
    out = _need(cfg, "out", str)
    lmax = _need(cfg, "lmax", int) if cfg.get("lmax") is not None else None
    st = _load_state(path, lmax)
    rc = _run_config(cfg, lmax=max(st.lmax, 4), sigma0=st.sigma0, dno_tol=1e-13)
    if not (dt > 0 and math.isfinite(dt)) or not (T > 0 and math.isfinite(T)):
        raise InvalidArgument("dt and t-final must be positive")
    record_every = int(cfg.get("record_every") or 1)
    ck_every = cfg.get("checkpoint_every")
    ck_dir = cfg.get("checkpoint_dir")
    if ck_every is not None:
        record_every = int(ck_every)
        ck_dir = ck_dir or (out.rsplit(".", 1)[0] + "_checkpoints")
    if record_every < 1:
        raise InvalidArgument("record and checkpoint cadence must be >= 1")
    traj = evolve(st, T, dt, record_every, rc.dno_options, get_basis(st.lmax),
                  checkpoint_dir=ck_dir, use_filter=bool(cfg.get("filter")))
    write_trajectory_csv(out, traj)
    if traj.error is not None:
        raise traj.error
    _emit([("steps_recorded", len(traj.times)), ("t_final", traj.times[-1]),
           ("energy_drift", traj.relative_drift("energy")),
           ("volume_drift", traj.relative_drift("volume"))])
    return EXIT_OK


def _cmd_branch(cfg):
    from .travelling import continue_branch, extrapolate_omega0

    l0, m0 = _need(cfg, "l0", int), _need(cfg, "m0", int)
    a_max = _need(cfg, "a_max")
    steps = _need(cfg, "steps", int)
    out = _need(cfg, "out", str)
    tol = float(cfg["tol"]) if cfg.get("tol") is not None else 1e-9
    lmax = _need(cfg, "lmax", int) if cfg.get("lmax") is not None else None
    rc = _run_config(cfg, dno_tol=1e-13)
    try:
        br = continue_branch(l0, m0, rc.sigma0, a_max, steps, tol, lmax=lmax,
                             opts=rc.dno_options, newton_tol=rc.newton_tol)
    except ContinuationFailure as exc:
        if exc.branch is not None:
            exc.branch.write_json(out)
        raise
    br.write_json(out)
    pairs = [("points", len(br.points)),
             ("max_residual", max(p.residual for p in br.points)),
             ("omega_last", br.points[-1].omega)]
    if len(br.points) >= 4:
        pairs.append(("omega0_extrapolated", extrapolate_omega0(br)))
    _emit(pairs)
    return EXIT_OK


_COMMANDS = {
    "resonances": _cmd_resonances,
    "dispersion": _cmd_dispersion,
    "dno-check": _cmd_dno_check,
    "deriv-check": _cmd_deriv_check,
    "energy": _cmd_energy,
    "evolve": _cmd_evolve,
    "branch": _cmd_branch,
}


def _limit_threads(n):
    if n is None:
        return None
    if n < 1:
        raise InvalidArgument("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def dispatch(argv=None):
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _merge(args)
        limiter = _limit_threads(cfg.get("threads"))
        try:
            return _COMMANDS[args.command](cfg)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except NotSimple as exc:
        print(f"error: kernel not simple ({exc})", file=sys.stderr)
        return EXIT_NOT_SIMPLE
    except RangeViolation as exc:
        print(f"error: range violation: {exc}", file=sys.stderr)
        return EXIT_NOT_SIMPLE
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DomainDegenerate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
