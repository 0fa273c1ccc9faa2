import numpy as np
import pytest
from numpy.testing import assert_allclose

from conevol import body as bodies
from conevol import solver, verify


def test_ball_is_fixed_point(n):
    res = solver.solve(solver.SolverConfig(p=0.0, init=bodies.make_ball(1.0, n, 16)))
    assert res.converged and res.iterations == 0 and res.reason == ""


@pytest.mark.parametrize("p", [-1.5, 0.0, 0.5])
def test_converges_to_unit_ball(p):
    init = bodies.make_perturbed_ball([(2, 0, 0.1), (3, 1, 0.05)], 2, 16)
    res = solver.solve(solver.SolverConfig(p=p, init=init))
    assert res.converged
    assert bodies.deltaH(res.body, bodies.make_ball(1.0, 2, 16)) <= 1e-6
    assert np.all(np.diff(res.history) < 0)
    assert res.final_residual <= res.config["tol"]


def test_circle_near_excluded_exponent():
    init = bodies.make_perturbed_ball([(2, 2, 0.1)], 1, 32)
    res = solver.solve(solver.SolverConfig(p=-1.95, init=init))
    assert res.converged
    assert bodies.deltaH(res.body, bodies.make_ball(1.0, 1, 32)) <= 1e-6


def test_nonuniform_target_satisfies_equation():
    init = bodies.make_ball(1.0, 2, 16)
    f = 1.0 + 0.05 * init.grid.nodes[:, 2]
    res = solver.solve(solver.SolverConfig(p=0.0, init=init, f=f))
    assert res.converged
    # h / K = f with p = 0
    assert_allclose(res.body.density, f, rtol=5e-8)
    assert verify.check_divergence_identity(res.body).status == verify.PASS


def test_residual_matches_definition():
    b = bodies.make_ellipsoid([1.2, 1.0, 0.9], 12)
    r = solver.residual(b, 1.0, 0.5)
    assert_allclose(r, np.log(b.h**0.5 / b.curvature), atol=1e-13)
    with pytest.raises(ValueError):
        solver.residual(b, 0.0, 0.5)


def test_ball_linearization_signs():
    mu = solver.ball_linearization(2, 4, 0.0)
    assert list(mu[[0, 1, 4, 9]]) == [3, 1, -3, -9]


def test_config_validation():
    b = bodies.make_ball(1.0, 2, 8)
    with pytest.raises(ValueError):
        solver.SolverConfig(p=-3.0, init=b)
    with pytest.raises(ValueError):
        solver.SolverConfig(p=1.0, init=b)
    with pytest.raises(ValueError):
        solver.SolverConfig(p=0.0, init=b, f=-np.ones(b.grid.size))
    with pytest.raises(ValueError):
        solver.SolverConfig(p=0.0, init=b, f=np.ones(3))


def test_non_convergence_is_a_result():
    init = bodies.make_perturbed_ball([(2, 0, 0.1)], 2, 12)
    res = solver.solve(solver.SolverConfig(p=0.0, init=init, max_iter=1))
    assert not res.converged
    assert res.reason == "max iterations exceeded"
    assert len(res.history) == 2
    d = res.as_dict()
    assert d["converged"] is False and len(d["history"]) == 2


def test_uniqueness_probe():
    L = 16
    inits = solver.default_inits(2, L)
    f = 1.0 + 0.05 * solver.sup_normalized_harmonic(inits[0].grid, L, 2, 0)
    rep = solver.uniqueness_probe(f, 0.0, inits)
    assert rep.all_converged and rep.uniqueness_consistent
    assert len(rep.distances) == 3
    assert rep.f_sup_deviation == pytest.approx(0.05)
    with pytest.raises(ValueError):
        solver.uniqueness_probe(f, 0.0, inits[:2])


def test_sweep_records_failures():
    rows = solver.self_similar_sweep([0.0], {"ok": [(2, 0, 0.1)], "bad": [(3, 0, 5.0)]}, 2, 12)
    assert [r.perturbation for r in rows] == ["ok", "bad"]
    assert rows[0].converged and not rows[1].converged and rows[1].reason
