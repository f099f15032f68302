import numpy as np
import pytest

from lipqgh import catalog
from lipqgh.cstar_analysis import (EpsCurve, SeminormFamily, eps_distance, epsilon_curve,
                                   f_leibniz_equivalence_check, leibniz_constant_lower, limit_subspace, limit_system,
                                   state_space_shape)
from lipqgh.opsys_core import MatrixStar, OperatorSubsystem
from lipqgh.seminorm import LinearMapNorm


def test_envelope_is_monotone_and_idempotent():
    c = EpsCurve("x", [1, 2, 3, 4], [0.1, 0.3, 0.0, 0.05], [0.5, 0.6, 0.2, 0.4])
    env = c.envelope()
    assert np.all(np.diff(env.upper) <= 0) and np.all(np.diff(env.lower) <= 0)
    assert np.all(env.lower <= env.upper)
    assert eps_distance(env, env.envelope()) == (0.0, pytest.approx(eps_distance(env, env)[1]))


def test_grid_must_increase():
    with pytest.raises(ValueError):
        EpsCurve("x", [1, 1], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        epsilon_curve(catalog.segment(), [2.0, 1.0])


def test_eps_distance_identical_and_mismatched_grids():
    a = EpsCurve("a", [1, 2, 3], [0.4, 0.3, 0.2], [0.4, 0.3, 0.2])
    b = EpsCurve("b", [1, 1.5, 3], [0.1, 0.1, 0.1], [0.1, 0.1, 0.1])
    assert eps_distance(a, a)[0] == 0.0
    d, radius = eps_distance(a, b)
    assert d >= 0.3 - 1e-12 and radius >= 0


def test_at_reads_envelopes():
    c = EpsCurve("x", [1, 2], [0.2, 0.1], [0.3, 0.25])
    lo, up = c.at(1.5)
    assert lo == pytest.approx(0.1) and up == pytest.approx(0.3)


def test_segment_curve_vanishes_beyond_one():
    c = epsilon_curve(catalog.segment(), [0.25, 0.5, 1.0, 2.0])
    assert np.all(c.upper[2:] == 0)
    assert c.lower[0] > 0


def test_triangle_curve_bounds_witness_formula():
    n = 8
    grid = np.array([0.5, 1.0, 2.0])
    c = epsilon_curve(catalog.flattening_triangle(n), grid, budget=0)
    assert np.all(c.lower >= (1 - grid / n) / 2 - 1e-7)
    assert np.all(c.lower <= c.upper)


def test_leibniz_lower_on_segment_and_tail():
    assert leibniz_constant_lower(catalog.segment(), samples=16) <= 1 + 1e-9
    assert leibniz_constant_lower(catalog.tail_weighted(5, 6), samples=0) >= 4 - 1e-9


def test_f_leibniz_check_verdicts():
    assert f_leibniz_equivalence_check(catalog.segment(), 1.0) is True
    assert f_leibniz_equivalence_check(catalog.tail_weighted(6, 6), 4.0, samples=0) is False


def test_limit_subspace_contains_unit_and_is_self_adjoint():
    F = catalog.family("two-by-two")
    S, cond = limit_subspace(F.system, F.blowups)
    assert S.contains(S.ambient.identity())
    for b in S.basis:
        assert S.contains(S.ambient.adjoint(b))
        assert S.contains(1j * b)
    assert cond >= 1


def test_limit_verdict_stable_under_reordering_and_rescaling():
    F = catalog.family("flattening-triangle")
    extra = LinearMapNorm(np.array([[1.0, 1.0, -2.0]]), "inf", weight=3.0)
    S1, _ = limit_subspace(F.system, F.blowups + [extra])
    S2, _ = limit_subspace(F.system, [extra] + F.blowups)
    S3, _ = limit_subspace(F.system, [LinearMapNorm(b.M, b.p, weight=5.0) for b in F.blowups])
    for T in (S2, S3):
        assert T.dim == S1.dim and all(T.contains(b) for b in S1.basis)


def test_near_singular_blowups_warn():
    amb = MatrixStar([1, 1, 1])
    S = OperatorSubsystem.full(amb)
    M = np.array([[1.0, -1.0, 0.0], [0.0, 1e-13, -1e-13]])
    with pytest.warns(RuntimeWarning):
        limit_subspace(S, [LinearMapNorm(M, "inf")])


def test_limit_system_small_tail_family():
    v = limit_system(catalog.family("tail-weighted", ns=[2, 4], cutoff=4))
    assert v.inherited and v.limit_subspace.is_full and v.eps_tail == 0.0 and v.consistent
    rec = v.to_dict()
    assert rec["inherited"] is True and rec["defect"] == 0.0


def test_family_monotone_in_n():
    F = catalog.family("two-by-two", ns=[1, 2, 4])
    assert F.is_monotone(samples=16)
    assert isinstance(F, SeminormFamily)


def test_shapes_of_small_systems():
    seg = state_space_shape(OperatorSubsystem.full(MatrixStar([1, 1])))
    assert seg.kind == "segment" and len(seg.extreme_points) == 2
    assert np.allclose(sorted(seg.extreme_points[:, 0]), [-0.5, 0.5])
    tri = state_space_shape(OperatorSubsystem.full(MatrixStar([1, 1, 1])), directions=32)
    assert tri.kind == "triangle"
    disc = state_space_shape(catalog.scalar_diagonal(), directions=16)
    assert disc.kind == "disc" and disc.radius == pytest.approx(0.5)
