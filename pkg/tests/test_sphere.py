import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import special

from conevol import sphere


@pytest.mark.parametrize("n,L", [(1, 8), (1, 32), (2, 8), (2, 32)])
def test_grid_nodes_weights_antipode(n, L):
    g = sphere.default_grid(n, L)
    assert_allclose(np.linalg.norm(g.nodes, axis=1), 1.0, atol=1e-14)
    assert_allclose(g.weights.sum(), g.area, rtol=1e-14)
    assert np.all(g.weights > 0)
    assert_allclose(g.nodes[g.antipode], -g.nodes, atol=1e-15)
    assert g.capacity >= L
    # frame is orthonormal and tangent
    assert_allclose(np.einsum("kai,ki->ka", g.frame, g.nodes), 0.0, atol=1e-14)
    gram = np.einsum("kai,kbi->kab", g.frame, g.frame)
    assert_allclose(gram, np.broadcast_to(np.eye(n), gram.shape), atol=1e-14)


def test_grid_rejects_underresolved():
    with pytest.raises(ValueError):
        sphere.build_grid(2, (10, 20), degree=32)
    with pytest.raises(ValueError):
        sphere.build_grid(1, 7)
    with pytest.raises(ValueError):
        sphere.build_grid(3, 10)


def test_integrate_shape_mismatch(grid2):
    with pytest.raises(ValueError):
        grid2.integrate(np.ones(grid2.size + 1))


def test_integrate_polynomials(grid2):
    x, y, z = grid2.nodes.T
    assert_allclose(grid2.integrate(z**2), 4 * math.pi / 3, rtol=1e-13)
    assert_allclose(grid2.integrate(x**4), 4 * math.pi / 5, rtol=1e-13)
    assert_allclose(grid2.integrate(x**2 * y**2 * z**2), 4 * math.pi / 105, rtol=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_round_trip(n, rng):
    L = 32
    g = sphere.default_grid(n, L)
    c = rng.standard_normal(sphere.basis_size(n, L))
    back = sphere.analyze(sphere.synthesize(c, g, L), g, L)
    assert_allclose(back, c, atol=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_laplacian_eigenvalues(n, rng):
    L = 32
    g = sphere.default_grid(n, L)
    H = sphere.harmonics(g, L)
    deg = sphere.degrees(n, L)
    for l in range(L + 1):
        c = np.where(deg == l, rng.standard_normal(deg.size), 0.0)
        d = H.derivatives(c)
        err = np.max(np.abs(d.laplacian + l * (l + n - 1) * d.value))
        assert err <= 1e-9 * max(1, l * l), (l, err)


def test_matches_scipy_harmonics(grid2):
    L = 6
    H = sphere.harmonics(grid2, L)
    theta, phi = grid2.colat, grid2.lon
    T, P = np.meshgrid(theta, phi, indexing="ij")
    for l in range(L + 1):
        for m in range(-l, l + 1):
            Y = special.sph_harm_y(l, abs(m), T.ravel(), P.ravel()) * (-1) ** m  # drop the phase
            ref = Y.real if m == 0 else math.sqrt(2) * (Y.real if m > 0 else Y.imag)
            e = np.zeros(sphere.basis_size(2, L))
            e[sphere.harmonic_index(2, l, m)] = 1.0
            assert_allclose(H.synthesize(e), ref, atol=1e-12)


def test_gradient_and_hessian_closed_form(grid2):
    # f = exp(<a, x>): grad f = f P a, Hess f = f (P a (P a)^T - <a, x> I)
    a = np.array([0.3, -0.2, 0.4])
    g = grid2
    f = np.exp(g.nodes @ a)
    d = sphere.differentiate(f, g)
    ta = g.to_frame(np.broadcast_to(a, g.nodes.shape))
    assert_allclose(d.gradient, f[:, None] * ta, atol=1e-11)
    ax = g.nodes @ a
    hess = f[:, None, None] * (ta[:, :, None] * ta[:, None, :] - ax[:, None, None] * np.eye(2))
    assert_allclose(d.hessian, hess, atol=1e-10)
    assert_allclose(d.hessian, np.swapaxes(d.hessian, 1, 2), atol=1e-13)


def test_gradient_finite_difference_circle(grid1):
    g = grid1
    f = lambda t: np.exp(np.cos(t) * 0.7) * np.sin(2 * t + 0.3)
    d = sphere.differentiate(f(g.colat), g)
    eps = 1e-5
    fd = (f(g.colat + eps) - f(g.colat - eps)) / (2 * eps)
    fd2 = (f(g.colat + eps) - 2 * f(g.colat) + f(g.colat - eps)) / eps**2
    assert_allclose(d.gradient[:, 0], fd, atol=1e-8)
    assert_allclose(d.hessian[:, 0, 0], fd2, atol=1e-4)


@pytest.mark.parametrize("n", [1, 2])
def test_integration_by_parts(n, rng):
    L = 32
    g = sphere.default_grid(n, L)
    H = sphere.harmonics(g, L)
    deg = sphere.degrees(n, L)
    decay = 1.0 / (1.0 + deg) ** 2
    cf, cg = rng.standard_normal((2, deg.size)) * decay
    df, dg = H.derivatives(cf), H.derivatives(cg)
    lhs = g.integrate(df.value * dg.laplacian)
    rhs = -g.integrate(np.sum(df.gradient * dg.gradient, axis=1))
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


def test_band_limit_warning(grid2):
    f = np.abs(grid2.nodes[:, 2])
    with pytest.warns(sphere.BandLimitWarning):
        d = sphere.differentiate(f, grid2)
    assert d.band_residual > 1e-10
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sphere.differentiate(grid2.nodes[:, 0] ** 3, grid2)


@pytest.mark.parametrize("n", [1, 2])
def test_linear_coeffs_exact(n, rng):
    g = sphere.default_grid(n, 12)
    c = rng.standard_normal(n + 1)
    assert_allclose(sphere.synthesize(sphere.linear_coeffs(n, 12, c), g, 12), g.nodes @ c, atol=1e-14)
    assert_allclose(sphere.analyze(g.nodes @ c, g, 12), sphere.linear_coeffs(n, 12, c), atol=1e-14)


def test_evaluate_matches_synthesis(grid2, rng):
    L = 10
    c = rng.standard_normal(sphere.basis_size(2, L))
    H = sphere.harmonics(grid2, L)
    assert_allclose(H.evaluate(c, grid2.nodes[::37]), H.synthesize(c)[::37], atol=1e-12)


def test_index_helpers():
    assert sphere.basis_size(1, 4) == 9
    assert sphere.basis_size(2, 4) == 25
    assert sphere.harmonic_index(2, 3, -2) == 10
    assert sphere.harmonic_index(1, 2, 2) == 3 and sphere.harmonic_index(1, 2, -2) == 4
    assert sphere.degree_of(2, 25) == 4
    with pytest.raises(ValueError):
        sphere.harmonic_index(1, 2, 0)
    with pytest.raises(ValueError):
        sphere.degree_of(2, 24)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_round_trip_property(n, L, seed):
    g = sphere.default_grid(n, L)
    c = np.random.default_rng(seed).standard_normal(sphere.basis_size(n, L))
    assert_allclose(sphere.analyze(sphere.synthesize(c, g, L), g, L), c, atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_integrate_is_linear(a, b, seed):
    g = sphere.default_grid(2, 8)
    f, h = np.random.default_rng(seed).standard_normal((2, g.size))
    assert_allclose(g.integrate(a * f + b * h), a * g.integrate(f) + b * g.integrate(h), atol=1e-10)
