import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipqgh.opsys_core import (MatrixStar, OperatorSubsystem, State, kadison_hat, order_norm, osc_seminorm,
                               product_defect, real_pair)

dims_strategy = st.lists(st.integers(1, 3), min_size=1, max_size=4)


def test_identity_and_units():
    amb = MatrixStar([1, 2])
    assert amb.size == 5
    assert np.allclose(amb.identity(), [1, 1, 0, 0, 1])
    e = amb.matrix_unit(1, 0, 1)
    assert np.allclose(amb.product(e, amb.adjoint(e)), amb.matrix_unit(1, 0, 0))


def test_rejects_bad_blocks():
    with pytest.raises(ValueError):
        MatrixStar([])
    with pytest.raises(ValueError):
        MatrixStar([2, 0])
    with pytest.raises(ValueError):
        MatrixStar([2]).as_vector(np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(dims_strategy, st.integers(0, 2 ** 31))
def test_product_is_associative_and_adjoint_reverses(dims, seed):
    amb = MatrixStar(dims)
    rng = np.random.default_rng(seed)
    x, y, z = (amb.random_element(rng, hermitian=False) for _ in range(3))
    assert np.allclose(amb.product(amb.product(x, y), z), amb.product(x, amb.product(y, z)))
    assert np.allclose(amb.adjoint(amb.product(x, y)), amb.product(amb.adjoint(y), amb.adjoint(x)))


@settings(max_examples=25, deadline=None)
@given(dims_strategy, st.integers(0, 2 ** 31))
def test_op_norm_is_submultiplicative_and_c_star(dims, seed):
    amb = MatrixStar(dims)
    rng = np.random.default_rng(seed)
    x, y = amb.random_element(rng, hermitian=False), amb.random_element(rng, hermitian=False)
    assert amb.op_norm(amb.product(x, y)) <= amb.op_norm(x) * amb.op_norm(y) + 1e-9
    assert np.isclose(amb.op_norm(amb.product(amb.adjoint(x), x)), amb.op_norm(x) ** 2)


def test_full_subsystem_dimension_and_coordinates(rng):
    amb = MatrixStar([2, 1])
    S = OperatorSubsystem.full(amb)
    assert S.dim == 5 and S.is_full
    x = amb.random_element(rng, hermitian=False)
    u, v = S.coordinates(x)
    assert np.allclose(S.element(u, v), x)


def test_span_of_contains_unit_and_is_adjoint_closed():
    amb = MatrixStar([2])
    S = OperatorSubsystem.span_of(amb, [amb.matrix_unit(0, 0, 1)])
    assert S.dim == 3
    assert S.contains(amb.identity())
    assert S.contains(amb.matrix_unit(0, 1, 0))
    assert not S.contains(amb.matrix_unit(0, 0, 0))


def test_subsystem_json_roundtrip():
    amb = MatrixStar([1, 1, 1])
    S = OperatorSubsystem.span_of(amb, [np.array([1.0, 0, 0.5])])
    T = OperatorSubsystem.from_json(S.to_json())
    assert T.dim == S.dim
    assert all(T.contains(b) for b in S.basis)


def test_from_dict_errors_name_the_path():
    with pytest.raises(ValueError, match="system"):
        OperatorSubsystem.from_dict({})
    with pytest.raises(ValueError, match=r"system.basis\[0\]"):
        OperatorSubsystem.from_dict({"blocks": [2], "basis": [[1, 2, 3]]})


def test_state_validation():
    amb = MatrixStar([2])
    with pytest.raises(ValueError):
        State(amb, [np.eye(2)])
    with pytest.raises(ValueError):
        State(amb, [np.diag([1.5, -0.5])])
    om = State.tracial(amb)
    assert np.isclose(om(amb.identity()), 1)


def test_state_on_subsystem_coordinates(rng):
    amb = MatrixStar([2, 1])
    S = OperatorSubsystem.full(amb)
    om = State.random(amb, rng)
    u = rng.standard_normal(S.dim)
    assert np.isclose(om.on(S) @ u, om(S.element(u)).real)


@settings(max_examples=30, deadline=None)
@given(dims_strategy, st.integers(0, 2 ** 31))
def test_osc_and_order_norm_against_eigenvalues(dims, seed):
    amb = MatrixStar(dims)
    S = OperatorSubsystem.full(amb)
    a = amb.random_element(np.random.default_rng(seed), hermitian=True)
    ev = amb.eigvalsh(a)
    assert abs(osc_seminorm(S, a) - (ev.max() - ev.min()) / 2) <= 1e-9
    assert abs(order_norm(S, a) - np.max(np.abs(ev))) <= 1e-9


def test_kadison_hat_is_affine_in_state(rng):
    amb = MatrixStar([2])
    S = OperatorSubsystem.full(amb)
    a = amb.random_element(rng)
    o1, o2 = State.random(amb, rng), State.random(amb, rng)
    mix = State.mixture([o1, o2], [0.3, 0.7])
    assert np.isclose(kadison_hat(S, a, mix), 0.3 * kadison_hat(S, a, o1) + 0.7 * kadison_hat(S, a, o2))


def test_product_defect_zero_on_algebras_positive_otherwise():
    assert product_defect(OperatorSubsystem.full(MatrixStar([2, 1]))).defect == 0.0
    amb = MatrixStar([1, 1, 1])
    S = OperatorSubsystem.span_of(amb, [np.array([1.0, 0, 0.5])])
    d = product_defect(S)
    assert d.defect > 0.1 and d.witness_residual > 0


def test_product_defect_is_basis_invariant(rng):
    amb = MatrixStar([2])
    e12 = amb.matrix_unit(0, 0, 1)
    S1 = OperatorSubsystem.span_of(amb, [e12])
    S2 = OperatorSubsystem.span_of(amb, [e12 + amb.adjoint(e12), 1j * (e12 - amb.adjoint(e12))])
    assert np.isclose(product_defect(S1).defect, product_defect(S2).defect)


def test_real_pair_shape():
    z = np.array([1 + 2j, 3 - 1j])
    assert np.allclose(real_pair(z), [1, 3, 2, -1])
