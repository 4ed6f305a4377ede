import numpy as np
import pytest

from capdrop.dno import (BallField, DnoOptions, assemble_P, ball_divergence, ball_gradient,
                         dirichlet_neumann, extraction_forms, harmonic_extension,
                         poisson_solve_ball, radial_nodes, self_adjointness_defect, solve_dno)
from capdrop.errors import ConvergenceFailure, InvalidArgument
from capdrop.geometry import build_geometry
from capdrop.sphgrid import SphCoeffs, coeff_index, degrees, ncoeffs

from conftest import LMAX, smooth_field


def _radial_laplacian_residual(u, r):
    """Per-mode ``u'' + 2u'/r - l(l+1)u/r^2`` of a ball field at radii ``r``."""
    p = u.powers.astype(float)
    l = degrees(u.lmax).astype(float)
    out = np.zeros((len(r), ncoeffs(u.lmax)))
    for j, pj in enumerate(p):
        fac = pj * (pj + 1.0) - l * (l + 1.0)
        out += (r[:, None] ** (pj - 2.0)) * fac[None, :] * u.coeffs[j][None, :]
    return out


def test_options_validation():
    DnoOptions().validate()
    for bad in (dict(mode="fourier"), dict(tol=0.0), dict(maxiter=0), dict(order=-1),
                dict(radial_nodes=0)):
        with pytest.raises(InvalidArgument):
            DnoOptions(**bad).validate()


def test_radial_nodes():
    r, w = radial_nodes(12)
    assert np.all((r > 0) & (r < 1))
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.dot(w, r ** 7) == pytest.approx(1.0 / 8.0, abs=1e-14)


def test_P_flat_and_constant(basis16):
    P0 = assemble_P(SphCoeffs(LMAX), basis16).matrix
    eye = np.eye(3)[:, :, None, None]
    assert np.max(np.abs(P0 - eye)) == 0.0
    P = assemble_P(SphCoeffs.constant(LMAX, 0.3), basis16).matrix
    assert np.max(np.abs(P - 1.3 * eye)) < 1e-14


def test_P_symmetric_elliptic(basis16, rng):
    h = smooth_field(rng, amp=0.05, norm_s=3)
    P = assemble_P(h, basis16)
    assert P.symmetry_defect() < 1e-15
    lo, hi = P.eigenvalue_bounds()
    assert lo > 0.8 and hi < 1.2
    assert P.value_at(0.5) is P.matrix
    with pytest.raises(InvalidArgument):
        P.value_at(0.0)


def test_ball_field_algebra():
    a = BallField(2, 1, np.ones((2, ncoeffs(2))))
    b = BallField(2, 0, np.ones((1, ncoeffs(2))))
    s = a + b
    assert list(s.powers) == [0, 1, 2]
    assert np.allclose((s - b).coeffs[1:], a.coeffs)
    assert np.allclose((-a).coeffs, -a.coeffs)
    assert np.allclose((2 * a).coeffs, 2 * a.coeffs)
    r = np.array([0.5])
    assert np.allclose(a.sample(r), 0.5 + 0.25)
    assert np.allclose(a.radial_derivative(r), 1.0 + 2 * 0.5)


def test_harmonic_extension_r3_phi32():
    psi = SphCoeffs.delta(LMAX, 3, 2)
    u = harmonic_extension(psi)
    r = np.linspace(0.1, 1.0, 7)
    prof = u.radial_profile(3, 2, r)
    assert np.allclose(prof, r ** 3, atol=1e-15)
    assert np.max(np.abs(_radial_laplacian_residual(u, r))) < 1e-12
    assert np.allclose(u.boundary_values().data, psi.data)
    assert np.allclose(u.boundary_normal_derivative().data, 3 * psi.data)


def test_poisson_constant_source():
    f = BallField(LMAX, 0, np.zeros((1, ncoeffs(LMAX))))
    f.coeffs[0, 0] = -1.0   # -Delta u = 1 in the (0,0) mode
    u, dropped = poisson_solve_ball(f)
    assert dropped == 0.0
    r = np.linspace(0.0, 1.0, 9)
    assert np.allclose(u.radial_profile(0, 0, r), (1 - r ** 2) / 6.0, atol=1e-15)


def test_poisson_manufactured():
    # u* = (1 - r^2) r^2 phi_20
    k = coeff_index(2, 0)
    ustar = BallField(LMAX, 2, np.zeros((3, ncoeffs(LMAX))))
    ustar.coeffs[0, k] = 1.0
    ustar.coeffs[2, k] = -1.0
    # Delta(r^p phi_2) = (p(p+1) - 6) r^(p-2) phi_2: p=2 gives 0, p=4 gives 14 r^2
    f = BallField(LMAX, 2, np.zeros((1, ncoeffs(LMAX))))
    f.coeffs[0, k] = -14.0
    u, _ = poisson_solve_ball(f)
    r = np.linspace(0.05, 1.0, 11)
    assert np.allclose(u.radial_profile(2, 0, r), ustar.radial_profile(2, 0, r), atol=1e-14)
    assert np.max(np.abs(_radial_laplacian_residual(u, r) - f.sample(r))) < 1e-12


def test_poisson_zero_and_resonant():
    u, _ = poisson_solve_ball(BallField.zeros(LMAX))
    assert u.norm() == 0.0
    f = BallField(LMAX, 0, np.zeros((1, ncoeffs(LMAX))))
    f.coeffs[0, coeff_index(2, 1)] = 1.0     # r^0 source on l = 2 needs r^2 log r
    with pytest.raises(InvalidArgument):
        poisson_solve_ball(f)
    _, dropped = poisson_solve_ball(f, resonant="drop")
    assert dropped == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        poisson_solve_ball(BallField(LMAX, -3, np.zeros((1, ncoeffs(LMAX)))))


def test_gradient_divergence_is_laplacian(basis16):
    # div grad (r^3 phi_32) = 0 and div grad (r^2 phi_00) = 6
    u = BallField(LMAX, 2, np.zeros((2, ncoeffs(LMAX))))
    u.coeffs[0, 0] = 1.0
    u.coeffs[1, coeff_index(3, 2)] = 1.0
    lap = ball_divergence(ball_gradient(u, basis16))
    r = np.array([0.3, 0.7])
    vals = lap.sample(r)
    assert np.allclose(vals[:, 0], 6.0, atol=1e-12)
    vals[:, 0] = 0.0
    assert np.max(np.abs(vals)) < 1e-12


def test_flat_spectrum(basis16):
    worst = 0.0
    for l in range(15):
        for m in range(-l, l + 1):
            phi = SphCoeffs.delta(LMAX, l, m)
            g = dirichlet_neumann(SphCoeffs(LMAX), phi, basis=basis16)
            worst = max(worst, (g - phi * l).norm())
    assert worst < 1e-10


def test_scaled_sphere(basis16):
    phi = SphCoeffs.delta(LMAX, 3, 2)
    g = dirichlet_neumann(SphCoeffs.constant(LMAX, 0.1), phi, basis=basis16)
    assert (g - phi * (3 / 1.1)).norm() < 1e-8


def test_linear_potential_gives_normal(basis16, rng):
    # Phi(y) = y_1 is harmonic everywhere, so G psi is the first normal component
    h = smooth_field(rng, amp=0.05, norm_s=3)
    geo = build_geometry(h, basis16)
    psi = basis16.analyze(geo.one_plus_h * basis16.e_r[0])
    res = solve_dno(h, psi, DnoOptions(tol=1e-13), basis16)
    assert np.max(np.abs(res.G_grid - geo.normal[0])) < 1e-10


def test_point_source(basis16, rng):
    y0 = np.array([0.0, 1.5, 4.0])  # far enough that lmax=16 resolves it
    h = smooth_field(rng, amp=0.04, norm_s=3)
    geo = build_geometry(h, basis16)
    y = geo.one_plus_h * basis16.e_r
    d = y - y0[:, None, None]
    dist = np.sqrt(np.sum(d * d, axis=0))
    phi = 1.0 / dist
    grad = -d / dist ** 3
    exact = np.sum(grad * geo.normal, axis=0)
    res = solve_dno(h, basis16.analyze(phi), DnoOptions(tol=1e-13), basis16)
    assert np.max(np.abs(res.G_grid - exact)) < 1e-6 * np.max(np.abs(exact))


def test_divergence_raises(basis16):
    h = SphCoeffs.delta(LMAX, 2, 0, 1.2)
    with pytest.raises(ConvergenceFailure):
        solve_dno(h, SphCoeffs.delta(LMAX, 2, 1), DnoOptions(maxiter=40), basis16)


def test_series_matches_fixed_point(basis16, rng):
    h = smooth_field(rng, amp=0.02, norm_s=3)
    psi = smooth_field(rng, amp=1.0, lmin=1)
    fp = solve_dno(h, psi, DnoOptions(tol=1e-13), basis16)
    se = solve_dno(h, psi, DnoOptions(mode="series", order=10), basis16)
    assert (fp.G - se.G).norm() < 1e-8
    assert fp.contraction < 0.2


def test_extraction_forms_agree(basis16, rng):
    h = smooth_field(rng, amp=0.05, norm_s=3)
    psi = smooth_field(rng, amp=1.0, lmin=1)
    flux, direct = extraction_forms(solve_dno(h, psi, DnoOptions(tol=1e-13), basis16))
    assert np.max(np.abs(flux - direct)) < 1e-9


def test_self_adjoint(basis16, rng):
    for _ in range(3):
        h = smooth_field(rng, amp=0.05, norm_s=3)
        p1 = smooth_field(rng, amp=1.0)
        p2 = smooth_field(rng, amp=1.0)
        assert self_adjointness_defect(h, p1, p2, DnoOptions(tol=1e-12), basis16) < 1e-8


def test_positivity_and_constants(basis16, rng):
    h = smooth_field(rng, amp=0.05, norm_s=3)
    for _ in range(3):
        psi = smooth_field(rng, amp=1.0)
        res = solve_dno(h, psi, basis=basis16)
        q = basis16.integrate(basis16.synthesize(psi) * res.G_grid * res.geometry.measure)
        assert q >= -1e-12
    g = dirichlet_neumann(h, SphCoeffs.constant(LMAX, 2.0), basis=basis16)
    assert g.norm() < 1e-12


def test_sample_potential(basis16):
    res = solve_dno(SphCoeffs(LMAX), SphCoeffs.delta(LMAX, 1, 0), basis=basis16)
    r, vals = res.sample_potential()
    assert len(r) == 2 * LMAX
    assert np.allclose(vals[:, coeff_index(1, 0)], r, atol=1e-15)
