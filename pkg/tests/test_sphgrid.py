import math

import numpy as np
import pytest

from capdrop.errors import InvalidArgument
from capdrop.sphgrid import (SphCoeffs, build_basis, coeff_index, degrees, get_basis,
                             laplace_beltrami, ncoeffs, orders, rotate_z, sobolev_norm)

from conftest import LMAX, smooth_field


def test_index_layout():
    assert ncoeffs(4) == 25
    assert coeff_index(0, 0) == 0
    assert coeff_index(2, -2) == 4
    assert coeff_index(2, 2) == 8
    l, m = degrees(3), orders(3)
    for k in range(ncoeffs(3)):
        assert coeff_index(int(l[k]), int(m[k])) == k


def test_grid_sizes():
    b = build_basis(4, 1)
    assert (b.ntheta, b.nphi) == (5, 9)
    b = build_basis(16)
    assert b.ntheta == math.ceil(1.5 * 17)
    assert b.nphi == math.ceil(1.5 * 33)


def test_lmax_zero_rejected():
    with pytest.raises(InvalidArgument):
        build_basis(0)


def test_gram_matrix(basis16):
    eye = np.eye(basis16.ncoef)
    gram = basis16.analyze_array(basis16.synthesize(eye))
    assert np.max(np.abs(gram - eye)) < 1e-12


def test_unpadded_grid_still_orthonormal():
    b = build_basis(4, 1)
    eye = np.eye(b.ncoef)
    assert np.max(np.abs(b.analyze_array(b.synthesize(eye)) - eye)) < 1e-12


def test_legendre_against_polynomial_derivatives(basis16):
    from numpy.polynomial import legendre as leg

    x, s = basis16.cos_theta, basis16.sin_theta
    worst = 0.0
    for l in range(LMAX + 1):
        for m in range(l + 1):
            coef = np.zeros(l + 1)
            coef[l] = 1.0
            d = leg.legder(coef, m) if m else coef
            ref = basis16.normalizer[l, m] * s ** m * leg.legval(x, d)
            worst = max(worst, np.max(np.abs(ref - basis16.legendre[:, l, m])))
    assert worst < 1e-12


def test_roundtrip_delta(basis16):
    c = SphCoeffs.delta(LMAX, 2, 1)
    back = basis16.analyze(basis16.synthesize(c))
    assert np.max(np.abs(back.data - c.data)) < 1e-12


def test_roundtrip_random(basis16, rng):
    c = SphCoeffs(LMAX, rng.standard_normal(ncoeffs(LMAX)))
    assert np.max(np.abs(basis16.analyze(basis16.synthesize(c)).data - c.data)) < 1e-12


def test_analyze_constant_and_x3(basis16):
    const = np.full(basis16.shape, 1.0 / math.sqrt(4 * math.pi))
    assert np.max(np.abs(basis16.analyze(const).data - SphCoeffs.delta(LMAX, 0, 0).data)) < 1e-13
    x3 = basis16.e_r[2] * math.sqrt(3 / (4 * math.pi))
    assert np.max(np.abs(basis16.analyze(x3).data - SphCoeffs.delta(LMAX, 1, 0).data)) < 1e-13


def test_analyze_shape_mismatch(basis16):
    with pytest.raises(InvalidArgument):
        basis16.analyze(np.zeros((3, 4)))


def test_synthesize_linear(basis16, rng):
    a = smooth_field(rng)
    b = smooth_field(rng)
    lhs = basis16.synthesize(2.0 * a - b)
    rhs = 2.0 * basis16.synthesize(a) - basis16.synthesize(b)
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_gradient_of_x3(basis16):
    f = SphCoeffs.delta(LMAX, 1, 0, 1.0 / math.sqrt(3 / (4 * math.pi)))
    g = basis16.gradient(f)
    x = basis16.e_r
    e3 = np.array([0.0, 0.0, 1.0])[:, None, None]
    assert np.max(np.abs(g - (e3 - x[2] * x))) < 1e-13


def test_gradient_of_constant(basis16):
    assert np.max(np.abs(basis16.gradient(SphCoeffs.constant(LMAX, 3.0)))) < 1e-14


def test_gradient_tangent(basis16, rng):
    c = SphCoeffs(LMAX, rng.standard_normal(ncoeffs(LMAX)))
    g = basis16.gradient(c)
    assert np.max(np.abs(np.sum(g * basis16.e_r, axis=0))) < 1e-11


def test_laplace_beltrami_multiplier():
    out = laplace_beltrami(SphCoeffs.delta(LMAX, 2, 1))
    assert out[2, 1] == -6.0
    assert np.count_nonzero(out.data) == 1
    assert laplace_beltrami(SphCoeffs.delta(LMAX, 0, 0)).norm() == 0.0


def test_hessian_trace_matches_spectral(basis16, rng):
    c = smooth_field(rng, lcut=LMAX - 2)
    c.data[degrees(LMAX) > LMAX - 2] = 0.0
    tr = basis16.hessian_trace(c)
    ref = basis16.synthesize(laplace_beltrami(c))
    assert np.max(np.abs(tr - ref)) < 1e-8


def test_hessian_constant_is_zero(basis16, rng):
    w = basis16.gradient(smooth_field(rng))
    assert np.max(np.abs(basis16.hessian_apply(SphCoeffs.constant(LMAX, 2.0), w))) < 1e-14


def test_hessian_identity_with_gradient(basis16, rng):
    c = SphCoeffs(LMAX, rng.standard_normal(ncoeffs(LMAX)))
    w = basis16.gradient(SphCoeffs(LMAX, rng.standard_normal(ncoeffs(LMAX))))
    lhs = np.sum(basis16.hessian_apply(c, w) * basis16.e_r, axis=0)
    lhs += np.sum(basis16.gradient(c) * w, axis=0)
    assert np.max(np.abs(lhs)) < 1e-9


def test_hessian_quadratic_form_x3(basis16):
    f = SphCoeffs.delta(LMAX, 1, 0, 1.0 / math.sqrt(3 / (4 * math.pi)))
    g = basis16.gradient(f)
    q = basis16.hessian_quadratic_form(f, g, g)
    x3 = basis16.e_r[2]
    assert np.max(np.abs(q + x3 * (1 - x3 ** 2))) < 1e-12


def test_hessian_matrix_consistent(basis16, rng):
    c = smooth_field(rng)
    w = basis16.gradient(smooth_field(rng))
    H = basis16.hessian_matrix(c)
    assert np.max(np.abs(np.einsum("ij...,j...->i...", H, w) - basis16.hessian_apply(c, w))) < 1e-12
    # symmetric on tangent vectors; the x (x) grad f part is not
    u = basis16.gradient(smooth_field(rng))
    uHw = np.einsum("i...,ij...,j...->...", u, H, w)
    wHu = np.einsum("i...,ij...,j...->...", w, H, u)
    assert np.max(np.abs(uHw - wHu)) < 1e-12


def test_hessian_against_gradient_of_gradient(rng):
    # differentiate the Cartesian gradient components once more on a larger basis
    c = smooth_field(rng, lcut=10)
    big = get_basis(LMAX + 8)
    g = big.gradient(c)
    comps = [big.analyze(g[i]) for i in range(3)]
    dg = np.stack([big.gradient(ci) for ci in comps])   # dg[i, k] = d_k g_i
    w = big.gradient(smooth_field(rng, lcut=4))
    ref = np.einsum("ik...,k...->i...", dg, w)
    assert np.max(np.abs(big.hessian_apply(c, w) - ref)) < 1e-9


def test_angular_momentum_on_basis(basis16):
    for l, m in [(3, 2), (2, -1), (5, 5), (4, 0)]:
        Mf = basis16.angular_momentum(SphCoeffs.delta(LMAX, l, m))
        ref = -m * basis16.synthesize(SphCoeffs.delta(LMAX, l, -m))
        assert np.max(np.abs(Mf - ref)) < 1e-12


def test_tangential_divergence_of_gradient(basis16, rng):
    c = smooth_field(rng, lcut=8)
    div = basis16.tangential_divergence(basis16.gradient(c))
    assert np.max(np.abs(div - basis16.synthesize(laplace_beltrami(c)))) < 1e-10


def test_sobolev_norm_examples():
    d22 = SphCoeffs.delta(LMAX, 2, 2)
    assert sobolev_norm(d22, 0) == pytest.approx(1.0, abs=1e-15)
    assert sobolev_norm(d22, 1) == pytest.approx(2.0, abs=1e-15)
    for s in (0.0, 0.5, 3.0):
        assert sobolev_norm(SphCoeffs.delta(LMAX, 0, 0), s) == 1.0
    with pytest.raises(InvalidArgument):
        sobolev_norm(d22, -0.5)


def test_rotate_z(basis16, rng):
    c = SphCoeffs(LMAX, rng.standard_normal(ncoeffs(LMAX)))
    assert np.array_equal(rotate_z(c, 0.0).data, c.data)
    back = rotate_z(rotate_z(c, 0.7), -0.7)
    assert np.max(np.abs(back.data - c.data)) < 1e-14
    axis = SphCoeffs.delta(LMAX, 4, 0)
    assert np.array_equal(rotate_z(axis, 1.1).data, axis.data)
    # rotation changes values as f(R(theta) x): evaluate one mode explicitly
    b = get_basis(4)
    f = SphCoeffs.delta(4, 3, 2)
    th = 0.4
    rot = b.synthesize(rotate_z(f, th))
    phi = b.phi[None, :]
    ref = b.legendre[:, 3, 2][:, None] * np.cos(2 * (phi + th))
    assert np.max(np.abs(rot - ref)) < 1e-13
    eps = 1e-6
    d = (rotate_z(c, eps) - rotate_z(c, -eps)) / (2 * eps)
    assert np.max(np.abs(basis16.synthesize(d) - basis16.angular_momentum(c))) < 1e-8


def test_coeffs_json_roundtrip(rng):
    c = smooth_field(rng)
    back = SphCoeffs.from_json(c.to_json())
    assert back.lmax == c.lmax
    assert np.array_equal(back.data, c.data)


def test_coeffs_json_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        SphCoeffs.from_dict({"lmax": 2, "coeffs": [[1, 0, float("nan")]]})
    with pytest.raises(InvalidArgument):
        SphCoeffs.from_dict({"lmax": 2, "coeffs": [[3, 0, 1.0]]})
    with pytest.raises(InvalidArgument):
        SphCoeffs.from_json("not json")


def test_coeffs_arithmetic_and_resize():
    a = SphCoeffs.delta(3, 2, 1, 2.0)
    b = SphCoeffs.delta(5, 4, -4, 1.0)
    s = a + b
    assert s.lmax == 5 and s[2, 1] == 2.0 and s[4, -4] == 1.0
    assert (s.resized(3)).lmax == 3
    assert (-a)[2, 1] == -2.0
    assert (a / 2.0)[2, 1] == 1.0
    assert SphCoeffs.constant(3, 1.0)[0, 0] == pytest.approx(math.sqrt(4 * math.pi))
