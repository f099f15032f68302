import numpy as np
import pytest

from lipqgh import catalog
from lipqgh.convex_opt import (BallSpec, SolverConfig, covering_cosine, cutting_plane_max, lineality_space,
                               max_nonconcave, polytope_vertices, project_to_ball, sphere_mesh, support,
                               vertex_support_oracle)
from lipqgh.opsys_core import MatrixStar, OperatorSubsystem
from lipqgh.seminorm import LinearMapNorm


def _unit_free(rng, dim):
    c = rng.standard_normal(dim)
    c[0] = 0.0
    return c


def test_support_on_euclidean_ball_is_closed_form(rng):
    S = OperatorSubsystem.full(MatrixStar([1, 1, 1]))
    ball = BallSpec(catalog.triangle_seminorm(1), S, 1.0)
    assert ball.single_ellipsoid
    c = _unit_free(rng, S.dim)
    lp = support(c, ball, path="conic")
    ex = support(c, ball)
    assert ex.value == pytest.approx(lp.value, rel=1e-7)
    assert ex.lower <= ex.value <= ex.upper + 1e-12


def test_support_paths_agree_on_polytope(rng):
    S = OperatorSubsystem.full(MatrixStar([1, 1, 1, 1]))
    M = rng.standard_normal((5, 4))
    M -= M.mean(1, keepdims=True)
    ball = BallSpec(LinearMapNorm(M, "inf"), S, 1.0, cap=3.0)
    c = rng.standard_normal(S.dim)
    a, b = support(c, ball, path="lp"), support(c, ball, path="conic")
    assert a.value == pytest.approx(b.value, abs=1e-7)
    assert a.gap <= 1e-8


def test_support_reports_unbounded_along_unit():
    X = catalog.segment()
    ball = BallSpec(X.L, X.system, 1.0)
    res = support(np.array([1.0, 0.0]), ball)
    assert res.status == "unbounded"
    assert lineality_space(ball).shape[1] >= 1


def test_support_certificate_is_feasible(rng):
    X = catalog.two_by_two(3)
    ball = BallSpec(X.L, X.system, 1.0, cap=X.R)
    c = rng.standard_normal(X.system.dim)
    res = support(c, ball)
    assert ball.gauge(ball.element(res.certificate)) <= 1 + 1e-9
    assert res.lower == pytest.approx(res.upper, abs=1e-7)


def test_projection_zero_inside_and_certified_outside():
    X = catalog.segment()
    ball = BallSpec(X.L, X.system, 1.0, cap=1.0)
    inside = project_to_ball(np.array([0.5, -0.5]), ball)
    assert inside.value == 0.0
    out = project_to_ball(np.array([3.0, -3.0]), ball)
    assert out.lower == pytest.approx(2.0, abs=1e-7) and out.upper == pytest.approx(2.0, abs=1e-7)


def test_projection_duality_gap_closes_on_triangle():
    X = catalog.flattening_triangle(8)
    ball = BallSpec(X.L, X.system, 1.0, cap=X.R)
    res = project_to_ball(np.array([1.0, 1.0, 0.0]), ball)
    assert res.lower == pytest.approx(0.4375, abs=1e-7) and res.upper == pytest.approx(0.4375, abs=1e-7)


def test_polytope_vertices_of_square():
    S = OperatorSubsystem.full(MatrixStar([1, 1, 1]))
    ball = BallSpec(LinearMapNorm(np.array([[1.0, -1, 0], [0, 1, -1]]), "inf"), S, 1.0, cap=5.0)
    V, _ = polytope_vertices(ball)
    assert len(V) >= 4
    c = np.array([0.0, 0.3, -0.2])
    assert vertex_support_oracle(c, ball)[0] == pytest.approx(support(c, ball).value, abs=1e-9)


def test_max_nonconcave_convex_objective_is_exact_on_polytope():
    S = OperatorSubsystem.full(MatrixStar([1, 1, 1]))
    ball = BallSpec(LinearMapNorm(np.array([[1.0, -1, 0], [0, 1, -1]]), "inf"), S, 1.0, cap=2.0)
    amb = S.ambient
    res = max_nonconcave(lambda x: amb.op_norm(x), ball, convex=True)
    assert res.status == "converged"
    assert res.value == pytest.approx(2.0, abs=1e-9)


def test_sphere_mesh_covers():
    pts = sphere_mesh(64, 3)
    assert pts.shape == (64, 3)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1)
    assert covering_cosine(pts) > 0.8


def test_cutting_plane_brackets_disc_radius():
    S = OperatorSubsystem.full(MatrixStar([1, 1, 1]))
    ball = BallSpec(catalog.triangle_seminorm(1), S, 1.0, cap=10.0)
    P = np.eye(S.dim)[1:]

    def g(Y):
        return np.linalg.norm(Y, axis=-1)

    def sub(y):
        return y / max(np.linalg.norm(y), 1e-300)

    lo, up, _, _, status = cutting_plane_max(ball, P, g, sub, mesh=32, rel_tol=1e-5)
    # max of the 2-norm of the non-unit coordinates over an ellipse
    assert lo <= up + 1e-12 and up - lo <= 1e-4 * up
    assert status == "converged"


def test_solver_config_json():
    cfg = SolverConfig(seed=5)
    assert SolverConfig.from_dict({"seed": 5}) == cfg
    with pytest.raises(ValueError, match="solver"):
        SolverConfig.from_dict({"bogus": 1})
