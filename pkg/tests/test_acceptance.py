"""The eight acceptance criteria, one test group per criterion.

Each test records its outcome through the ``record`` fixture; the terminal
summary prints one PASS/FAIL line per criterion.
"""
import json

import numpy as np
import pytest

from lipqgh import catalog
from lipqgh.cli import main
from lipqgh.convex_opt import BallSpec, support, vertex_support_oracle
from lipqgh.cstar_analysis import (epsilon_curve, f_leibniz_equivalence_check, leibniz_constant_lower, limit_system,
                                   state_space_shape)
from lipqgh.metric_geometry import MatrixState, coupling_defect, rho_states, rho_ucp
from lipqgh.opsys_core import MatrixStar, OperatorSubsystem, State, osc_seminorm
from lipqgh.seminorm import LinearMapNorm, dual_seminorm, evaluate, verify_bridge

K = 64


@pytest.fixture(scope="module")
def verdicts():
    """Limit verdicts shared by criteria 2 to 5 (computed once)."""
    return {
        "flattening-triangle": limit_system(catalog.family("flattening-triangle", ns=[1, 2, 4, 8])),
        "two-by-two": limit_system(catalog.family("two-by-two", ns=[2, 4, 8])),
        "tail-weighted": limit_system(catalog.family("tail-weighted", ns=[2, 4, 8, 16], cutoff=K)),
    }


def _same_subspace(S, T, tol=1e-10):
    return S.dim == T.dim and all(S.contains(b, tol) for b in T.basis) and all(T.contains(b, tol) for b in S.basis)


# ---------------------------------------------------------------- 1

def test_c1_osc_matches_eigenvalue_oracle(record):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        while True:
            dims = list(rng.integers(1, 4, size=rng.integers(1, 5)))
            if sum(dims) <= 12:
                break
        amb = MatrixStar(dims)
        S = OperatorSubsystem.full(amb)
        a = amb.random_element(rng, hermitian=True)
        ev = amb.eigvalsh(a)
        worst = max(worst, abs(osc_seminorm(S, a) - (ev.max() - ev.min()) / 2))
    assert record(1, worst <= 1e-9), worst


# ---------------------------------------------------------------- 2

@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_c2_triangle_bridge_defect_and_radius(record, n):
    X, Y = catalog.flattening_triangle(n), catalog.segment()
    chk = verify_bridge(catalog.triangle_bridge(n), X.system, Y.system, X.L, Y.L)
    cd = coupling_defect(catalog.triangle_pair(n))
    iv = X.radius_interval
    ok = (chk.passed is True and abs(cd.upper - 1 / n) <= 1e-6 and abs(cd.lower - 1 / n) <= 1e-6
          and abs(iv.lo - 1) <= 1e-4 and abs(iv.hi - 1) <= 1e-4)
    assert record(2, ok), (chk, cd.lower, cd.upper, iv)


def test_c2_triangle_limit_system(record, verdicts):
    v = verdicts["flattening-triangle"]
    amb = MatrixStar([1, 1, 1])
    expected = OperatorSubsystem.span_of(amb, [np.array([1.0, 0, 0.5]), np.array([0, 1.0, 0.5])])
    i, j = v.defect.witness_pair
    b = v.limit_subspace.basis
    prod = amb.product(b[i], b[j])
    ok = (_same_subspace(v.limit_subspace, expected) and v.inherited is False
          and not v.limit_subspace.contains(prod) and v.defect.witness_residual > 1e-3)
    assert record(2, ok)


# ---------------------------------------------------------------- 3

def test_c3_two_by_two_limit_is_scalar_diagonal(record, verdicts):
    v = verdicts["two-by-two"]
    assert record(3, _same_subspace(v.limit_subspace, catalog.scalar_diagonal()) and v.inherited is False)


def test_c3_state_space_shapes(record):
    disc = state_space_shape(catalog.scalar_diagonal(), directions=64)
    tri = state_space_shape(OperatorSubsystem.full(MatrixStar([1, 1, 1])), directions=64)
    ok = (disc.kind == "disc" and len(disc.support) == 64 and np.max(np.abs(disc.support - 0.5)) <= 1e-6
          and tri.kind == "triangle" and len(tri.extreme_points) == 3)
    assert record(3, ok)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_c3_two_by_two_coupling_defect(record, n):
    cd = coupling_defect(catalog.two_by_two_pair(n))
    assert record(3, cd.upper <= 3 / n and cd.lower <= cd.upper), (cd.lower, cd.upper)


# ---------------------------------------------------------------- 4

def test_c4_tail_witness_values(record):
    A = catalog.tail_witness(K)
    limit = catalog.tail_weighted_seminorm(K + 1, K)
    amb = MatrixStar([2] * K)
    AA = amb.product(amb.adjoint(A), A)
    ok = abs(evaluate(limit, A) - 1) <= 1e-8
    for n in (2, 4, 8, 16):
        ok &= abs(evaluate(catalog.tail_weighted_seminorm(n, K), AA) - max(1, n - 1)) <= 1e-8
    assert record(4, ok)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_c4_leibniz_sweep(record, n):
    X = catalog.tail_weighted(n, K)
    lower = leibniz_constant_lower(X, samples=0)
    verdict = f_leibniz_equivalence_check(X, n - 1.5, samples=0)
    assert record(4, lower >= n - 1 - 1e-9 and verdict is False), (lower, verdict)


def test_c4_tail_limit_is_full_and_inherited(record, verdicts):
    v = verdicts["tail-weighted"]
    assert record(4, v.limit_subspace.is_full and v.inherited is True)


# ---------------------------------------------------------------- 5

def test_c5_envelopes_monotone(record):
    curves = [epsilon_curve(catalog.two_by_two(n), [0.5, 1, 1.5, 2]) for n in (2, 8)]
    curves += [epsilon_curve(catalog.flattening_triangle(n), [0.5, 1, 1.5, 2]) for n in (2, 8)]
    curves.append(epsilon_curve(catalog.tail_weighted(8, 8), [1, 4, 16, 40]))
    ok = all(np.all(np.diff(c.upper) <= 0) and np.all(np.diff(c.lower) <= 0) and np.all(c.lower <= c.upper)
             for c in curves)
    assert record(5, ok)


def test_c5_segment_has_zero_defect_beyond_one(record):
    c = epsilon_curve(catalog.segment(), [1.0, 1.5, 2.0, 4.0])
    assert record(5, np.all(c.upper == 0) and np.all(c.lower == 0))


def test_c5_eps_tail_separates_verdicts(record, verdicts):
    ok = (verdicts["two-by-two"].eps_tail_lower >= 0.1 and verdicts["flattening-triangle"].eps_tail_lower >= 0.1
          and verdicts["tail-weighted"].eps_tail <= 1e-6)
    ok &= all(v.consistent for v in verdicts.values())
    assert record(5, ok)


# ---------------------------------------------------------------- 6

def test_c6_support_vs_vertex_enumeration(record):
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(20):
        N = 3 + i % 2
        S = OperatorSubsystem.full(MatrixStar([1] * N))
        M = rng.standard_normal((N + 1, N))
        M -= M.mean(1, keepdims=True)
        ball = BallSpec(LinearMapNorm(M, "inf" if i % 3 else "1"), S, 1.0, cap=2.0)
        c = rng.standard_normal(S.dim)
        worst = max(worst, abs(support(c, ball).value - vertex_support_oracle(c, ball)[0]))
    assert record(6, worst <= 1e-6), worst


def test_c6_rho_ucp_level_one_matches_rho_states(record):
    rng = np.random.default_rng(7)
    X = catalog.two_by_two(4)
    worst = 0.0
    for _ in range(20):
        o1, o2 = State.random(X.ambient, rng), State.random(X.ambient, rng)
        ref = rho_states(X, o1, o2).value
        h = rho_ucp(X, MatrixState.from_state(o1), MatrixState.from_state(o2))
        worst = max(worst, abs(h.lower - ref), abs(h.upper - ref))
    assert record(6, worst <= 1e-8), worst


# ---------------------------------------------------------------- 7

@pytest.mark.parametrize("make", [lambda: catalog.flattening_triangle(2), lambda: catalog.two_by_two(2),
                                  lambda: catalog.tail_weighted(4, 4)], ids=["triangle", "two-by-two", "tail"])
def test_c7_metric_axioms(record, make):
    X = make()
    rng = np.random.default_rng(71)
    ball = BallSpec(X.L, X.system, 1.0)
    sym_ok, worst = True, 0.0
    for _ in range(100):
        a, b, c = (State.random(X.ambient, rng) for _ in range(3))
        ab = rho_states(X, a, b, ball=ball).value
        ba = rho_states(X, b, a, ball=ball).value
        bc = rho_states(X, b, c, ball=ball).value
        ac = rho_states(X, a, c, ball=ball).value
        sym_ok &= ab == ba
        worst = max(worst, ac - ab - bc)
    assert record(7, sym_ok and worst <= 1e-9), worst


def test_c7_weak_star_metrization(record):
    rng = np.random.default_rng(72)
    ok = True
    systems = [catalog.segment(), catalog.flattening_triangle(2), catalog.two_by_two(2), catalog.two_by_two(4),
               catalog.tail_weighted(3, 3)]
    for X in systems:
        amb = X.ambient
        target = State.random(amb, rng)
        other = State.random(amb, rng, pure=True)
        vals = []
        for k in (1000, 2000, 4000, 8000, 16000):
            # coordinatewise convergent: omega_k -> target at rate 1/k plus a 1/k^2 wobble
            t = 1.0 / k + 1.0 / k ** 2
            om = State.mixture([target, other], [1 - t, t])
            vals.append(dual_seminorm(X, om.on(X.system) - target.on(X.system)).value)
        vals = np.array(vals)
        ok &= bool(np.all(np.diff(vals) < 0) and vals[-1] < vals[0] / 8)
    assert record(7, ok)


# ---------------------------------------------------------------- 8

def _cli_suite(out, cfg):
    runs = [
        ["radius", "--config", str(cfg)],
        ["rho", "--config", str(cfg)],
        ["epsilon-curve", "--config", str(cfg), "--grid", "0.5:2:4"],
        ["shape", "--config", str(cfg)],
        ["dist-bound", "--example", "flattening-triangle", "--n", "1,2,4,8"],
        ["hausdorff", "--example", "flattening-triangle", "--n", "2"],
        ["example", "flattening-triangle", "--n", "2,4"],
        ["example", "two-by-two", "--n", "2", "radius"],
        ["leibniz", "--example", "tail-weighted", "--n", "2,4", "--cutoff", "4"],
        ["limit-system", "--example", "tail-weighted", "--n", "4", "--cutoff", "4"],
        ["rho", "--example", "two-by-two", "--n", "2", "--seed", "3"],
    ]
    for i, argv in enumerate(runs):
        assert main(argv + ["--out", str(out / f"run{i}"), "--seed", "11"] if "--seed" not in argv
                    else argv + ["--out", str(out / f"run{i}")]) == 0


def test_c8_cli_is_deterministic(record, tmp_path):
    cfg = tmp_path / "c2.json"
    cfg.write_text(json.dumps({
        "name": "C2", "system": {"blocks": [1, 1]},
        "seminorm": {"kind": "linmap", "matrix": [[0.5, -0.5]], "p": "inf"},
        "tasks": [{"task": "rho", "states": [{"block": 0, "vector": [1]}, {"block": 1, "vector": [1]}, "tracial"]}],
    }))
    _cli_suite(tmp_path / "a", cfg)
    _cli_suite(tmp_path / "b", cfg)
    fa = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    fb = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    same = fa == fb and len(fa) > 10 and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in fa)
    assert record(8, same)
