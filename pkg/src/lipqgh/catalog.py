"""Built-in Lip-normed systems and families.

* :func:`segment` -- ``C^2`` with ``|a - b| / 2``.
* :func:`flattening_triangle` -- ``C^3`` with ``||((a-b)/2, n((a+b)/2 - c))||_2``;
  its triangle of states flattens onto the segment as ``n`` grows.
* :func:`two_by_two` -- ``M_2`` with the quotient of
  ``max(|(a+d)/2|, n|(a-d)/2|, |b|, |c|)``; the limit is the subspace of
  matrices with scalar diagonal.
* :func:`tail_weighted` -- ``K``-tuples of ``2x2`` matrices with the quotient
  of ``max_k k ||A_k||`` plus the jumps ``k^3 |a_k - d_k|`` for ``k < n``.

Each family also provides the bridge seminorm linking member ``n`` to its
limit, together with the linear "difference" map used for distance bounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .opsys_core import MatrixStar, OperatorSubsystem
from .seminorm import Bridge, LinearMapNorm, LipNormedSystem, Max, QuotientByUnit, SeminormSpec

DEFAULT_CUTOFF = 64


def _row(size, entries):
    r = np.zeros(size)
    for i, v in entries:
        r[i] = v
    return r


def _leibniz_segment(R):
    # sup |a^2 - b^2| / 2 over |a|, |b| <= R and |a - b| <= 2
    return max(R, R * R / 2 if R <= 2 else 2 * R - 2)


# ------------------------------------------------------------------ C^2

def segment_seminorm() -> SeminormSpec:
    return LinearMapNorm(np.array([[0.5, -0.5]]), "inf")


def segment() -> LipNormedSystem:
    amb = MatrixStar([1, 1])
    S = OperatorSubsystem.full(amb, name="segment")
    return LipNormedSystem(S, segment_seminorm(), name="segment", leibniz=_leibniz_segment,
                           witnesses=[np.array([1.0, -1.0])])


def norm_quotient(ambient: MatrixStar, name: str = "norm-quotient") -> LipNormedSystem:
    """Full algebra with ``L(a) = min_lambda ||a - lambda e||`` (``osc`` on hermitian elements)."""
    S = OperatorSubsystem.full(ambient, name=name)
    atom = LinearMapNorm(np.eye(ambient.size), "op", blocks=ambient.block_dims)
    return LipNormedSystem(S, QuotientByUnit(atom, ambient.identity(), "complex"), name=name)


# ------------------------------------------------------------ triangle

def triangle_seminorm(n: float) -> SeminormSpec:
    M = np.array([[0.5, -0.5, 0.0], [n / 2, n / 2, -float(n)]])
    return LinearMapNorm(M, "2")


def flattening_triangle(n: float) -> LipNormedSystem:
    amb = MatrixStar([1, 1, 1])
    S = OperatorSubsystem.full(amb, name=f"triangle[n={n:g}]")
    return LipNormedSystem(S, triangle_seminorm(n), name=f"flattening-triangle[n={n:g}]",
                           witnesses=[np.array([1.0, -1.0, 0.0])])


def triangle_limit_subspace() -> OperatorSubsystem:
    amb = MatrixStar([1, 1, 1])
    return OperatorSubsystem.span_of(amb, [np.ones(3), np.array([1.0, -1.0, 0.0])], name="triangle-limit")


def triangle_embedding() -> np.ndarray:
    """Matrix of ``(alpha, beta) -> (alpha, beta, (alpha + beta) / 2)``."""
    return np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])


def triangle_bridge(n: float) -> Bridge:
    iota = triangle_embedding()
    D = np.hstack([np.eye(3), -iota])
    coupling = LinearMapNorm(D, "inf", weight=float(n))
    return Bridge(triangle_seminorm(n), segment_seminorm(), (coupling,), 3)


def triangle_blowups():
    return [LinearMapNorm(np.array([[0.5, 0.5, -1.0]]), "inf")]


# --------------------------------------------------------------- M_2

def _m2_rows(n: float, offset: int = 0, size: int = 4):
    """Rows of ``(a+d)/2``, ``(a-d)/2``, ``b``, ``c`` on a flat ``2x2`` block at ``offset``."""
    o = offset
    return (_row(size, [(o, 0.5), (o + 3, 0.5)]), _row(size, [(o, 0.5), (o + 3, -0.5)]),
            _row(size, [(o + 1, 1.0)]), _row(size, [(o + 2, 1.0)]))


def two_by_two_norm(n: float) -> SeminormSpec:
    """``max(|(a+d)/2|, n|(a-d)/2|, |b|, |c|)`` on ``M_2``."""
    s, d, b, c = _m2_rows(n)
    return Max((LinearMapNorm(np.vstack([s, b, c]), "inf"), LinearMapNorm(d[None], "inf", weight=float(n))))


def two_by_two_seminorm(n: float) -> SeminormSpec:
    return QuotientByUnit(two_by_two_norm(n), np.eye(2).reshape(-1), "real")


def two_by_two(n: float) -> LipNormedSystem:
    amb = MatrixStar([2])
    S = OperatorSubsystem.full(amb, name="M2")
    e12 = np.array([0.0, 1.0, 0.0, 0.0])
    w = [np.array([1.0 / n, 1.0, 1.0, -1.0 / n])]
    return LipNormedSystem(S, two_by_two_seminorm(n), name=f"two-by-two[n={n:g}]",
                           witnesses=w + [e12], radius_options={"mesh": 64})


def scalar_diagonal() -> OperatorSubsystem:
    amb = MatrixStar([2])
    e12 = np.array([0, 1, 0, 0], dtype=complex)
    e21 = np.array([0, 0, 1, 0], dtype=complex)
    return OperatorSubsystem.span_of(
        amb, [np.eye(2).reshape(-1), e12 + e21, 1j * (e12 - e21)], name="scalar-diagonal")


def two_by_two_limit() -> LipNormedSystem:
    S = scalar_diagonal()
    return LipNormedSystem(S, two_by_two_seminorm(1.0), name="two-by-two[limit]",
                           witnesses=[np.array([0.0, 1.0, 1.0, 0.0])], radius_options={"mesh": 64})


def two_by_two_bridge(n: float) -> Bridge:
    """``max(L^1(A0), L^n(A), n ||A - A0||_1)`` on ``C0 + M_2`` (``A0`` first)."""
    rows = [np.concatenate([-r[:4], r[:4]]) for r in _m2_rows(1, size=8)]
    coupling = LinearMapNorm(np.vstack(rows), "inf", weight=float(n))
    return Bridge(two_by_two_seminorm(1.0), two_by_two_seminorm(n), (coupling,), 4)


def two_by_two_blowups():
    _, d, _, _ = _m2_rows(1)
    return [LinearMapNorm(d[None], "inf")]


# ------------------------------------------------------ tail weighted

def tail_weighted_seminorm(n: float, cutoff: int = DEFAULT_CUTOFF) -> SeminormSpec:
    K = int(cutoff)
    amb = MatrixStar([2] * K)
    wts = np.concatenate([np.full(4, k) for k in range(1, K + 1)]).astype(float)
    base = QuotientByUnit(LinearMapNorm(np.diag(wts), "op", blocks=amb.block_dims), amb.identity(), "complex")
    kmax = min(int(np.ceil(n)) - 1, K)
    if kmax < 1:
        return base
    rows = [_row(amb.size, [(amb.offsets[k - 1], k ** 3), (amb.offsets[k - 1] + 3, -k ** 3)])
            for k in range(1, kmax + 1)]
    return Max((base, LinearMapNorm(np.vstack(rows), "inf")))


def tail_witness(cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
    """``A_k = [[0, 1/k], [0, 0]]`` for every ``k``."""
    K = int(cutoff)
    x = np.zeros(4 * K, dtype=complex)
    for k in range(1, K + 1):
        x[4 * (k - 1) + 1] = 1.0 / k
    return x


def tail_weighted(n: float, cutoff: int = DEFAULT_CUTOFF) -> LipNormedSystem:
    K = int(cutoff)
    amb = MatrixStar([2] * K)
    S = OperatorSubsystem.full(amb, name=f"tail[K={K}]")
    kmax = min(int(np.ceil(n)) - 1, K)

    def leibniz(R, kmax=kmax):
        return max(R, 2 * R + 1, 2 * R + 2 * kmax)

    sx = np.zeros(4 * K)
    sx[1] = sx[2] = 1.0
    A = tail_witness(K)
    A_adj = amb.adjoint(A)
    return LipNormedSystem(S, tail_weighted_seminorm(n, K), name=f"tail-weighted[n={n:g},K={K}]",
                           leibniz=leibniz, witnesses=[sx, A, A_adj])


def tail_weighted_bridge(n: float, cutoff: int = DEFAULT_CUTOFF) -> Bridge:
    """``max(L_n(A), L_inf(B), n ||A - B||)`` on ``A + B``."""
    K = int(cutoff)
    amb = MatrixStar([2] * K)
    D = np.hstack([np.eye(amb.size), -np.eye(amb.size)])
    coupling = LinearMapNorm(D, "op", weight=float(n), blocks=amb.block_dims)
    return Bridge(tail_weighted_seminorm(n, K), tail_weighted_seminorm(K + 1, K), (coupling,), amb.size)


# ------------------------------------------------------------ bridge pairs

def _same_state(omega):
    return omega


def triangle_pair(n: float):
    from .metric_geometry import BridgePair
    from .opsys_core import State

    X, Y = flattening_triangle(n), segment()
    D = np.hstack([np.eye(3), -triangle_embedding()])

    def to_Y(om):
        r = [float(np.real(m[0, 0])) for m in om.rho]
        return State(Y.ambient, [[[r[0] + r[2] / 2]], [[r[1] + r[2] / 2]]])

    def to_X(om):
        return State(X.ambient, list(om.rho) + [np.zeros((1, 1))])

    return BridgePair(X, Y, triangle_bridge(n), D, MatrixStar([1, 1, 1]), to_Y, to_X,
                      name=f"triangle-bridge[n={n:g}]")


def two_by_two_pair(n: float):
    from .metric_geometry import BridgePair

    D = np.hstack([-np.eye(4), np.eye(4)])
    return BridgePair(two_by_two_limit(), two_by_two(n), two_by_two_bridge(n), D, MatrixStar([2]),
                      _same_state, _same_state, name=f"two-by-two-bridge[n={n:g}]")


def tail_weighted_pair(n: float, cutoff: int = DEFAULT_CUTOFF):
    from .metric_geometry import BridgePair

    K = int(cutoff)
    amb = MatrixStar([2] * K)
    D = np.hstack([np.eye(amb.size), -np.eye(amb.size)])
    Y = tail_weighted(K + 1, K)
    Y.name = f"tail-weighted[limit,K={K}]"
    return BridgePair(tail_weighted(n, K), Y, tail_weighted_bridge(n, K), D, amb, _same_state, _same_state,
                      name=f"tail-bridge[n={n:g},K={K}]")


# ----------------------------------------------------------- families

@dataclass
class FamilyMember:
    n: float
    system: LipNormedSystem


def family_members(name: str, ns, cutoff: int = DEFAULT_CUTOFF):
    build = {"two-by-two": two_by_two, "flattening-triangle": flattening_triangle,
             "tail-weighted": lambda n: tail_weighted(n, cutoff)}
    if name not in build:
        raise ValueError(f"unknown example {name!r}; expected one of {sorted(build)}")
    return [FamilyMember(float(n), build[name](n)) for n in ns]


FAMILY_GRIDS = {"two-by-two": [1.0, 1.25, 1.5, 1.75, 2.0], "flattening-triangle": [1.0, 1.25, 1.5, 1.75, 2.0],
                "tail-weighted": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]}


def family(name: str, ns=(1, 2, 4, 8), cutoff: int = DEFAULT_CUTOFF):
    """The named example as a :class:`~lipqgh.cstar_analysis.SeminormFamily`."""
    from .cstar_analysis import SeminormFamily

    if name == "two-by-two":
        return SeminormFamily(name, OperatorSubsystem.full(MatrixStar([2]), name="M2"), two_by_two_seminorm(1.0),
                              two_by_two_blowups(), list(ns), two_by_two, FAMILY_GRIDS[name])
    if name == "flattening-triangle":
        return SeminormFamily(name, OperatorSubsystem.full(MatrixStar([1, 1, 1])), segment_seminorm(),
                              triangle_blowups(), list(ns), flattening_triangle, FAMILY_GRIDS[name])
    if name == "tail-weighted":
        K = int(cutoff)
        # deep members certify eps = 0 only beyond their Leibniz constant 2R + 2K
        grid = [r for r in FAMILY_GRIDS[name] if r < 2 * K + 2] + [2.0 * K + 4]
        return SeminormFamily(name, OperatorSubsystem.full(MatrixStar([2] * K)), tail_weighted_seminorm(K + 1, K),
                              [], list(ns), lambda n: tail_weighted(n, K), grid)
    raise ValueError(f"unknown example {name!r}; expected one of {sorted(FAMILY_GRIDS)}")
