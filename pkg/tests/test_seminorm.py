import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipqgh import catalog
from lipqgh.opsys_core import MatrixStar, OperatorSubsystem
from lipqgh.seminorm import (Bridge, Grow, LinearMapNorm, LipNormedSystem, Max, QuotientByUnit, Scale,
                             dual_seminorm, evaluate, from_dict, from_json, instantiate, kernel_is_unit_line,
                             quotient_minimizer, verify_bridge)


def test_linear_map_norms():
    x = np.array([3.0, -4.0])
    assert evaluate(LinearMapNorm(np.eye(2), "2"), x) == pytest.approx(5)
    assert evaluate(LinearMapNorm(np.eye(2), "inf"), x) == pytest.approx(4)
    assert evaluate(LinearMapNorm(np.eye(2), "1", weight=2), x) == pytest.approx(14)


def test_max_scale_grow():
    a = LinearMapNorm(np.array([[1.0, 0]]), "inf")
    b = LinearMapNorm(np.array([[0, 1.0]]), "inf")
    x = np.array([1.0, 3.0])
    assert evaluate(Max((a, b)), x) == pytest.approx(3)
    assert evaluate(Scale(0.5, b), x) == pytest.approx(1.5)
    assert evaluate(Grow(a), x, n=7) == pytest.approx(7)
    with pytest.raises(ValueError):
        evaluate(Grow(a), x)


def test_quotient_of_op_norm_is_half_spread(rng):
    amb = MatrixStar([2, 1])
    X = catalog.norm_quotient(amb)
    a = amb.random_element(rng)
    ev = amb.eigvalsh(a)
    assert X.L_of(a) == pytest.approx((ev.max() - ev.min()) / 2, abs=1e-9)
    lam = quotient_minimizer(X.L, a)
    assert abs(lam - (ev.max() + ev.min()) / 2) < 1e-6


def test_quotient_complex_field_on_non_hermitian():
    amb = MatrixStar([1, 1])
    L = QuotientByUnit(LinearMapNorm(np.eye(2), "op", blocks=(1, 1)), amb.identity(), "complex")
    x = np.array([1j, -1j])
    assert evaluate(L, x) == pytest.approx(1)
    assert evaluate(L, x + (2 - 3j) * amb.identity()) == pytest.approx(1, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3))
def test_two_by_two_seminorm_vanishes_on_unit(seed, lam):
    L = catalog.two_by_two_seminorm(3)
    x = np.random.default_rng(seed).standard_normal(4)
    x = x + x[[0, 2, 1, 3]]  # hermitian real 2x2
    assert evaluate(L, x + lam * np.eye(2).reshape(-1)) == pytest.approx(evaluate(L, x), abs=1e-8)


def test_spec_json_roundtrip():
    d = {"kind": "max", "children": [
        {"kind": "linmap", "matrix": [[0.5, -0.5]], "p": "inf"},
        {"kind": "scale", "c": 2, "child": {"kind": "linmap", "matrix": [[1, 1]], "p": "1"}},
        {"kind": "quotient", "unit": [[1, 0], [1, 0]], "child": {"kind": "linmap", "matrix": [[1, 0], [0, 1]]}}]}
    spec = from_json(json.dumps(d))
    x = np.array([1.0, 2.0])
    assert evaluate(spec, x) == pytest.approx(max(0.5, 6, 1 / np.sqrt(2)))


@pytest.mark.parametrize("bad,path", [
    ({"kind": "max", "children": [{"kind": "nope"}]}, r"seminorm.children\[0\]"),
    ({"kind": "scale", "child": {"kind": "linmap", "matrix": [[1]]}}, "seminorm: missing key 'c'"),
    ({"kind": "linmap", "matrix": [[1]], "p": "7"}, "seminorm"),
    ({"matrix": [[1]]}, "seminorm"),
])
def test_schema_errors_are_path_localised(bad, path):
    with pytest.raises(ValueError, match=path):
        from_dict(bad)


def test_instantiate_replaces_grow():
    spec = Grow(LinearMapNorm(np.eye(1), "inf"))
    assert evaluate(instantiate(spec, 5), np.array([2.0])) == pytest.approx(10)


def test_radius_of_segment_and_triangle():
    assert catalog.segment().radius_interval.hi == pytest.approx(1, abs=1e-9)
    iv = catalog.flattening_triangle(2).radius_interval
    assert iv.lo == pytest.approx(1, abs=1e-4) and iv.hi == pytest.approx(1, abs=1e-4)


def test_radius_of_two_by_two():
    n = 2
    iv = catalog.two_by_two(n).radius_interval
    exact = np.sqrt(1 + 1 / n ** 2)
    assert iv.lo <= exact + 1e-9 and iv.hi >= exact - 1e-9
    assert iv.hi - iv.lo <= 1e-3


def test_kernel_is_unit_line():
    assert kernel_is_unit_line(catalog.flattening_triangle(3))
    amb = MatrixStar([1, 1, 1])
    bad = LipNormedSystem(OperatorSubsystem.full(amb), LinearMapNorm(np.array([[1.0, -1.0, 0]]), "inf"))
    assert not kernel_is_unit_line(bad)


def test_dual_seminorm_of_point_masses_on_segment():
    X = catalog.segment()
    c = np.array([0.0, 1.0]) @ X.system.basis.real.T  # evaluation difference delta_1 - delta_2 restricted
    d1 = np.real(X.system.basis @ np.array([1.0, 0]))
    d2 = np.real(X.system.basis @ np.array([0.0, 1]))
    assert dual_seminorm(X, d1 - d2).value == pytest.approx(2, abs=1e-8)
    assert c.shape == (2,)


def test_lip_norm_uses_radius_scaled_norm():
    X = catalog.segment()
    assert X.lip_norm(np.array([1.0, 1.0])) == pytest.approx(1)
    assert X.lip_norm(np.array([2.0, -2.0])) == pytest.approx(2)


@pytest.mark.parametrize("n", [1, 3])
def test_verify_bridge_two_by_two(n):
    X, Y = catalog.two_by_two_limit(), catalog.two_by_two(n)
    chk = verify_bridge(catalog.two_by_two_bridge(n), X.system, Y.system, X.L, Y.L, samples=3)
    assert chk.passed is True, chk.max_error


def test_verify_bridge_rejects_non_bridge():
    S = OperatorSubsystem.full(MatrixStar([1]))
    with pytest.raises(TypeError):
        verify_bridge(LinearMapNorm(np.eye(1), "inf"), S, S, None, None)


def test_bridge_evaluates_sides_and_coupling():
    br = catalog.triangle_bridge(2)
    x = np.array([1.0, 0, 0.5, 1.0, 0])
    assert evaluate(br, x) == pytest.approx(max(evaluate(br.left, x[:3]), evaluate(br.right, x[3:]), 0.0))
    assert isinstance(br, Bridge)
