import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conevol import body as bodies
from conevol import sphere, verify


def test_c1_values():
    assert verify.compute_c1(1) == pytest.approx(1 / 6, abs=1e-14)
    assert verify.compute_c1(2) == pytest.approx(1 / 8, abs=1e-14)
    k = verify.StabilityConstants.for_dimension(2)
    assert k.gamma == pytest.approx(8 / math.sqrt(3))


@pytest.mark.parametrize("n", [1, 2])
def test_cap_fraction_independent_of_direction(n, rng):
    g = sphere.default_grid(n, 64)
    exact = 2 * verify.compute_c1(n)
    for _ in range(4):
        w = rng.standard_normal(n + 1)
        # indicator quadrature is only first-order accurate
        assert verify.cap_fraction(g, w) == pytest.approx(exact, abs=0.02)


def test_ball_equality_cases(unit_balls, n):
    b = unit_balls[n]
    for rec in (verify.check_key_inequality(b), verify.check_basic_estimate(b), verify.check_stability_theorem(b)):
        assert rec.status == verify.PASS
        assert abs(rec.slack) <= 1e-9, rec


def test_poincare_equality_on_degree_one(n):
    g = sphere.default_grid(n, 16)
    u = 2.0 + g.nodes @ np.arange(1.0, n + 2)
    rec = verify.poincare_record(u, g, 16)
    assert rec.status == verify.PASS and abs(rec.slack) <= 1e-9
    v = u + sphere.synthesize(np.eye(sphere.basis_size(n, 16))[-1], g, 16)
    assert verify.poincare_record(v, g, 16).slack > 0.1


def test_translated_ball_stability_closed_forms(n):
    for cn in (0.1, 0.2, 0.3):
        c = np.zeros(n + 1)
        c[0] = cn
        b = bodies.make_translated_ball(c, n, 32)
        rec = verify.check_stability_theorem(b)
        assert rec.status == verify.PASS
        assert rec.details["eps"] == pytest.approx(2 * cn / (1 - cn), abs=1e-12)
        assert rec.details["delta2"] == pytest.approx(cn / (n + 1) ** 1.5, abs=1e-12)


def test_identities_on_ellipsoid(n):
    e = bodies.translate(bodies.make_ellipsoid([1.3, 1.0, 0.8][: n + 1], 24), [0.1, -0.05, 0.02][: n + 1])
    assert verify.check_divergence_identity(e).status == verify.PASS
    for p in (-1.5, -0.5, 0.5, 2.0):
        assert verify.check_ibp_identity(e, p).slack <= 1e-10
    assert verify.check_centroaffine_identity(e).status == verify.PASS
    rec = verify.check_centroid_decomposition(e, 0.5)
    assert rec.status == verify.PASS and rec.details["full_status"] == verify.VIOLATED


def test_ibp_accepts_raw_support(grid2):
    h = 1.0 + 0.1 * grid2.nodes[:, 2] ** 2
    rec = verify.check_ibp_identity(h, 0.5, grid2, 16)
    assert rec.status == verify.PASS
    with pytest.raises(ValueError):
        verify.check_ibp_identity(h, -3.0, grid2, 16)


def test_conditional_identities(unit_balls, n):
    b = unit_balls[n]
    for p in (-2.5 if n == 2 else -1.5, -0.5, 0.0, 1.0, 3.0):
        assert verify.check_isotropic_identity(b, p).status == verify.PASS
        rec = verify.check_centroid_decomposition(b, p) if p > -(n + 1) else None
        if rec is not None:
            assert rec.details["full_status"] == verify.PASS
    with pytest.raises(ValueError):
        verify.check_isotropic_identity(b, -(n + 1))
    e = bodies.make_ellipsoid([1.3, 1.0, 0.8][: n + 1], 24)
    assert verify.check_isotropic_identity(e, 0.0).status == verify.VIOLATED


def test_excluded_exponent_probe_on_ellipse():
    e = bodies.make_ellipsoid([1.4, 1.0], 32)
    rec = verify.excluded_exponent_probe(e)
    assert rec.status == verify.PASS and rec.lhs > 1e-3


def test_diameter_chain_band():
    b = bodies.make_perturbed_ball([(2, 0, 0.01)], 2, 16)
    rec = verify.check_diameter_bound_chain(b, 0.2)
    assert rec.status == verify.PASS
    assert "pinching_third" in rec.details["links"]
    with pytest.raises(ValueError):
        verify.check_diameter_bound_chain(bodies.make_ball(1.5, 2, 16), 0.2)


def test_hausdorff_report(n):
    b = bodies.make_perturbed_ball([(2, 2, 0.05)], n, 16)
    rec = verify.check_hausdorff_comparison(b, bodies.make_ball(1.0, n, 16))
    assert rec.status == verify.REPORT and rec.details["alpha_hat"] > 0
    same = verify.check_hausdorff_comparison(b, b)
    assert same.status == verify.SKIPPED


def test_sweep_ordering_and_threads():
    items = [(f"b{i}", bodies.make_perturbed_ball([(2, 0, 0.02 * (i + 1))], 2, 12)) for i in range(3)][::-1]
    serial = verify.sweep(items)
    threaded = verify.sweep(items, jobs=3)
    keys = [(r.body_id, r.check) for r in serial]
    assert keys == sorted(keys)
    assert keys == [(r.body_id, r.check) for r in threaded]
    assert [r.slack for r in serial] == [r.slack for r in threaded]


def test_unknown_check():
    with pytest.raises(ValueError):
        verify.run_checks(bodies.make_ball(1.0, 2, 8), ["nope"])


def test_hausdorff_constant_for_concentric_balls():
    # delta_2 = delta_H = 0.1, diameter 2.2, n = 2: alpha = 0.01 * 2.2^2 / 0.1^4
    rec = verify.check_hausdorff_comparison(bodies.make_ball(1.0, 2, 8), bodies.make_ball(1.1, 2, 8))
    assert rec.details["alpha_hat"] == pytest.approx(484.0, rel=1e-10)
