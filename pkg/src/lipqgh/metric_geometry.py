"""Metrics on states and matrix states, and bridge-based distance bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import cvxpy as cp

from .convex_opt import (
    BallSpec, SolveResult, SolverConfig, _norm_constraints, _solve, bloch_map, cutting_plane_max,
    sphere_mesh, support,
)
from .opsys_core import MatrixStar, OperatorSubsystem, State, real_pair
from .seminorm import Bridge, LinearMapNorm, LipNormedSystem

__all__ = [
    "State", "MatrixState", "HausdorffBound", "BridgePair", "rho_states", "rho_ucp", "hausdorff_states",
    "coupling_defect", "dist_upper", "extreme_states", "random_ucp", "transpose_map",
]


# -------------------------------------------------------------- matrix states

class MatrixState:
    """A unital completely positive map into ``M_p`` given by Choi blocks.

    Block ``i`` is ``C_i = sum_kl E_kl (x) phi(E_kl)`` of size ``d_i p``; the
    map is completely positive iff every block is positive semidefinite and
    unital iff ``sum_i tr_1 C_i = I_p``.
    """

    def __init__(self, ambient: MatrixStar, p: int, choi, check: bool = True):
        self.ambient = ambient
        self.p = int(p)
        self.choi = [np.asarray(c, dtype=complex) for c in choi]
        for c, d in zip(self.choi, ambient.block_dims):
            if c.shape != (d * self.p, d * self.p):
                raise ValueError("Choi block has the wrong shape")
        if check:
            self.validate()
        self.matrix = self._map_matrix()

    def validate(self, tol: float = 1e-9):
        total = np.zeros((self.p, self.p), dtype=complex)
        for c, d in zip(self.choi, self.ambient.block_dims):
            if np.max(np.abs(c - c.conj().T)) > tol:
                raise ValueError("Choi block is not hermitian")
            if np.min(np.linalg.eigvalsh(0.5 * (c + c.conj().T))) < -tol:
                raise ValueError("Choi block is not positive semidefinite")
            total += np.einsum("kakb->ab", c.reshape(d, self.p, d, self.p))
        if np.max(np.abs(total - np.eye(self.p))) > tol:
            raise ValueError("map is not unital")

    def _map_matrix(self) -> np.ndarray:
        """Complex matrix sending a flat ambient vector to the flat ``p x p`` image."""
        p = self.p
        out = np.zeros((p * p, self.ambient.size), dtype=complex)
        for c, d, o in zip(self.choi, self.ambient.block_dims, self.ambient.offsets):
            c4 = c.reshape(d, p, d, p)
            for k in range(d):
                for l in range(d):
                    out[:, o + k * d + l] = c4[k, :, l, :].reshape(-1)
        return out

    def __call__(self, x) -> np.ndarray:
        return (self.matrix @ self.ambient.as_vector(x)).reshape(self.p, self.p)

    @classmethod
    def from_state(cls, omega: State) -> "MatrixState":
        return cls(omega.ambient, 1, [r.T for r in omega.rho])

    @classmethod
    def from_map(cls, ambient: MatrixStar, p: int, fn) -> "MatrixState":
        """Choi blocks of a linear map given as a python function on blocks."""
        choi = []
        for b, d in enumerate(ambient.block_dims):
            c = np.zeros((d * p, d * p), dtype=complex)
            for k in range(d):
                for l in range(d):
                    img = np.asarray(fn(ambient.matrix_unit(b, k, l)), dtype=complex)
                    c[k * p:(k + 1) * p, l * p:(l + 1) * p] = img
            choi.append(c)
        return cls(ambient, p, choi)


def transpose_map(ambient: MatrixStar) -> MatrixState:
    """``x -> x^T`` on a single ``d x d`` block (positive, not completely positive)."""
    d = ambient.block_dims[0]
    if len(ambient.block_dims) != 1:
        raise ValueError("transpose map is defined on one block")
    p = d
    choi = np.zeros((d * p, d * p), dtype=complex)
    for k in range(d):
        for l in range(d):
            choi[k * p + l, l * p + k] = 1.0
    return MatrixState(ambient, p, [choi], check=False)


def identity_map(ambient: MatrixStar) -> MatrixState:
    d = ambient.block_dims[0]
    if len(ambient.block_dims) != 1:
        raise ValueError("identity map is defined on one block")
    return MatrixState.from_map(ambient, d, lambda x: ambient.blocks(x)[0])


def random_ucp(ambient: MatrixStar, p: int, rng, rank: int | None = None) -> MatrixState:
    """Random unital completely positive map: normalise a random positive Choi matrix."""
    blocks = []
    for d in ambient.block_dims:
        k = rank or d * p
        g = rng.standard_normal((d * p, k)) + 1j * rng.standard_normal((d * p, k))
        blocks.append(g @ g.conj().T)
    total = sum(np.einsum("kakb->ab", c.reshape(d, p, d, p)) for c, d in zip(blocks, ambient.block_dims))
    w, v = np.linalg.eigh(total)
    s = v @ np.diag(w ** -0.5) @ v.conj().T
    blocks = [np.kron(np.eye(d), s) @ c @ np.kron(np.eye(d), s) for c, d in zip(blocks, ambient.block_dims)]
    blocks = [0.5 * (c + c.conj().T) for c in blocks]
    return MatrixState(ambient, p, blocks)


# ------------------------------------------------------------ state samplers

def extreme_states(ambient: MatrixStar, mesh: int = 512, seed: int = 0):
    """Pure states: points for 1x1 blocks, a Fibonacci Bloch mesh for 2x2, random otherwise."""
    rng = np.random.default_rng(seed)
    out = []
    for b, d in enumerate(ambient.block_dims):
        if d == 1:
            out.append(State.point(ambient, b))
        elif d == 2:
            out += [State.bloch(ambient, b, v) for v in sphere_mesh(mesh, 3)]
        else:
            for _ in range(mesh):
                out.append(State.point(ambient, b, rng.standard_normal(d) + 1j * rng.standard_normal(d)))
    return out


def _canonical_sign(c):
    nz = np.nonzero(np.abs(c) > 0)[0]
    return -c if nz.size and c[nz[0]] < 0 else c


# ------------------------------------------------------------------ metrics

def rho_states(X: LipNormedSystem, omega1: State, omega2: State, config: SolverConfig | None = None,
               ball: BallSpec | None = None) -> SolveResult:
    """``sup{ |omega1(a) - omega2(a)| : a hermitian, L(a) <= 1 }``."""
    ball = ball or BallSpec(X.L, X.system, 1.0)
    c = omega1.on(X.system) - omega2.on(X.system)
    c[0] = 0.0  # both states are unital
    # the ball is symmetric; fixing the sign makes the metric exactly symmetric
    return support(_canonical_sign(c), ball, config)


@dataclass
class HausdorffBound:
    lower: float
    upper: float
    witness: object = field(default=None, repr=False)
    status: str = "converged"

    def __post_init__(self):
        if self.lower > self.upper + 1e-9 * max(1.0, abs(self.upper)):
            raise ValueError("lower bound exceeds upper bound")


def _image_functional(S: OperatorSubsystem, mat: np.ndarray, xi: np.ndarray):
    """Coordinates of ``u -> Re xi^* Delta(element(u)) xi``."""
    p = len(xi)
    vals = []
    for b in S.basis:
        img = (mat @ b).reshape(p, p)
        vals.append(float(np.real(xi.conj() @ img @ xi)))
    return np.array(vals)


def _entry_functional(S: OperatorSubsystem, mat: np.ndarray, a: int, b: int, theta: float, p: int):
    row = mat[a * p + b]
    return np.real(np.exp(-1j * theta) * (S.basis @ row))


def rho_ucp(X: LipNormedSystem, phi: MatrixState, psi: MatrixState, restarts: int = 4, iters: int = 20,
            angles: int = 16, seed: int = 0, config: SolverConfig | None = None) -> HausdorffBound:
    """Enclosure of ``sup{ ||phi(x) - psi(x)|| : x hermitian, L(x) <= 1 }``.

    Lower: alternating maximisation over unit vectors and the ball.  Upper:
    the Frobenius norm bounded entrywise (exact on the diagonal, a circle of
    ``angles`` directions off it), or exactly when the ball is one ellipsoid.
    """
    if phi.p != psi.p:
        raise ValueError("matrix states must have the same size")
    p = phi.p
    S = X.system
    ball = BallSpec(X.L, S, 1.0)
    mat = phi.matrix - psi.matrix
    rng = np.random.default_rng(seed)
    # lower bound
    best, witness = 0.0, None
    starts = [np.eye(p)[i].astype(complex) for i in range(p)]
    starts += [v / np.linalg.norm(v) for v in (rng.standard_normal((restarts, p)) + 1j * rng.standard_normal((restarts, p)))]
    for xi in starts:
        prev = -1.0
        for _ in range(iters):
            res = support(_image_functional(S, mat, xi), ball, config)
            if res.certificate is None or not np.isfinite(res.value):
                break
            x = S.element(res.certificate)
            D = (mat @ x).reshape(p, p)
            D = 0.5 * (D + D.conj().T)
            w, v = np.linalg.eigh(D)
            j = int(np.argmax(np.abs(w)))
            val = float(abs(w[j]))
            if val > best:
                best, witness = val, x
            if val <= prev * (1 + 1e-12):
                break
            prev, xi = val, v[:, j]
    # upper bound
    sq = 0.0
    status = "converged"
    for a in range(p):
        res = support(_entry_functional(S, mat, a, a, 0.0, p), ball, config)
        sq += res.upper ** 2
        for b in range(a + 1, p):
            vals = [support(_entry_functional(S, mat, a, b, np.pi * k / angles, p), ball, config).upper
                    for k in range(angles)]
            ent = max(vals) / np.cos(np.pi / (2 * angles))
            sq += 2 * ent ** 2
    upper = float(np.sqrt(sq))
    if ball.single_ellipsoid:
        comp = ball.compiled
        atom = comp.atoms[0]
        A = real_pair(mat @ S.basis.T)
        A = np.hstack([A, np.zeros((A.shape[0], comp.nw - comp.ncoord))])
        # sup ||A w|| over ||G w|| <= b; A vanishes on the kernel of G
        upper = min(upper, atom.bound * float(np.linalg.norm(A @ np.linalg.pinv(atom.G, rcond=1e-12), 2)))
    if upper - best > 1e-4 * max(upper, 1e-300):
        status = "gap_open"
    return HausdorffBound(best, max(upper, best), witness, status)


# ------------------------------------------------------------------ bridges

@dataclass
class BridgePair:
    """Two Lip-normed systems joined by a bridge seminorm on ``X + Y``.

    ``difference`` maps the flat vector of ``X + Y`` to a target algebra
    (for instance ``A - A0`` or ``a - iota(b)``) and ``to_Y`` / ``to_X`` send
    states of one side to matched states of the other.
    """

    X: LipNormedSystem
    Y: LipNormedSystem
    bridge: Bridge
    difference: np.ndarray
    target: MatrixStar
    to_Y: object = None
    to_X: object = None
    name: str = "bridge"

    def __post_init__(self):
        self.system = self.X.system.direct_sum(self.Y.system, name=self.name)
        if self.bridge.split != self.X.ambient.size:
            raise ValueError("bridge split does not match the size of X")

    def ball(self) -> BallSpec:
        if not hasattr(self, "_ball"):
            self._ball = BallSpec(self.bridge, self.system, 1.0)
        return self._ball

    def left_state(self, omega: State) -> State:
        zeros = [np.zeros((d, d)) for d in self.Y.ambient.block_dims]
        return State(self.system.ambient, list(omega.rho) + zeros)

    def right_state(self, omega: State) -> State:
        zeros = [np.zeros((d, d)) for d in self.X.ambient.block_dims]
        return State(self.system.ambient, zeros + list(omega.rho))


def _coupling_domination(pair: BridgePair) -> float:
    """``1 / weight`` if a coupling atom is the operator norm of the difference map itself."""
    best = np.inf
    D = np.asarray(pair.difference, dtype=float)
    for c in pair.bridge.couplings:
        if c.weight <= 0 or c.M.shape != D.shape or not np.allclose(c.M, D, atol=0, rtol=0):
            continue
        if c.p == "op" and tuple(c.blocks) == tuple(pair.target.block_dims):
            best = min(best, 1.0 / c.weight)
        elif c.p == "inf" and max(pair.target.block_dims) == 1:
            best = min(best, 1.0 / c.weight)
    return best


def coupling_defect(pair: BridgePair, mesh: int = 32, rel_tol: float = 1e-4, max_blocks: int | None = None,
                    config: SolverConfig | None = None) -> SolveResult:
    """``sup{ ||D(a + b)|| : a + b hermitian, bridge(a + b) <= 1 }``.

    Target blocks of size one are exact supports; ``2x2`` blocks use cutting
    planes on ``|t| + |s|`` (the norm of ``t I + s . sigma``).  When a
    coupling atom is ``n ||D .||`` the upper end ``1/n`` is used directly and
    only ``max_blocks`` target blocks are searched for the lower end.
    Decoupled bridges are reported as ``unbounded``.
    """
    ball = pair.ball()
    S = pair.system
    comp = ball.compiled
    D = np.asarray(pair.difference, dtype=float)
    # real-pair map from coordinates to the target
    Bt = S.basis.T
    img = D @ Bt
    T = real_pair(img)
    tgt = pair.target
    dom = _coupling_domination(pair)
    blocks = list(range(len(tgt.block_dims)))
    if np.isfinite(dom) and max_blocks is None:
        max_blocks = 2
    if max_blocks is not None:
        blocks = blocks[:max_blocks]
    lower, upper, witness, status, solves = 0.0, 0.0, None, "converged", 0
    if np.isfinite(dom):
        # the upper end is structural; a few supports along the target axes give the lower end
        for b in blocks:
            d = tgt.block_dims[b]
            rows = T[[tgt.offsets[b]]] if d == 1 else (bloch_map(tgt, b) @ T if d == 2 else None)
            if rows is None:
                continue
            for row in rows:
                res = support(row, ball, config)
                solves += 1
                if res.status == "unbounded":
                    return SolveResult(np.inf, None, np.inf, solves, "unbounded", np.inf, np.inf)
                x = tgt.blocks(D @ S.element(res.certificate))[b]
                val = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (x + x.conj().T)))))
                if val > lower:
                    lower, witness = val, res.certificate
        upper = max(dom, lower)
        gap = upper - lower
        st = "converged" if gap <= max(rel_tol, 1e-8) * max(upper, 1e-300) else "gap_open"
        return SolveResult(lower, witness, gap, solves, st, lower, upper, {"path": "coupling-atom"})
    for b in blocks:
        d = tgt.block_dims[b]
        o = tgt.offsets[b]
        if d == 1:
            res = support(T[o], ball, config)
            solves += 1
            if res.status == "unbounded":
                return SolveResult(np.inf, None, np.inf, solves, "unbounded", np.inf, np.inf)
            lo, hi, u = res.lower, res.upper, res.certificate
        elif d == 2:
            P = bloch_map(tgt, b) @ T
            lo, hi, u, n_s, st = cutting_plane_max(
                ball, P,
                lambda Y: np.abs(Y[:, 0]) + np.linalg.norm(Y[:, 1:], axis=1),
                lambda Y: np.hstack([np.sign(Y[:, :1]), Y[:, 1:] / np.maximum(
                    np.linalg.norm(Y[:, 1:], axis=1, keepdims=True), 1e-300)]),
                mesh=mesh, rel_tol=rel_tol, config=config)
            solves += n_s
            if st == "unbounded":
                return SolveResult(np.inf, None, np.inf, solves, "unbounded", np.inf, np.inf)
            if st != "converged":
                status = "gap_open"
        else:
            raise NotImplementedError("coupling defect supports target blocks of size 1 and 2")
        if lo > lower:
            lower, witness = lo, u
        upper = max(upper, hi)
    upper = max(upper, lower)
    if upper - lower > max(rel_tol, 1e-8) * max(upper, 1e-300):
        status = "gap_open"
    return SolveResult(lower, witness, upper - lower, solves, status, lower, upper)


def _matched_rho(pair: BridgePair, omega_left: State, omega_right: State, config=None) -> SolveResult:
    ball = pair.ball()
    c = pair.left_state(omega_left).on(pair.system) - pair.right_state(omega_right).on(pair.system)
    return support(_canonical_sign(c), ball, config)


def _distance_to_side(pair: BridgePair, omega: State, side: str, config: SolverConfig | None = None) -> float:
    """Certified lower bound of ``inf_{omega'} rho(omega (+) 0, 0 (+) omega')``.

    Any ``a`` with ``bridge(a) <= 1`` gives ``omega(a_X) - lambda_max(a_Y)``.
    """
    cfg = config or SolverConfig()
    S = pair.system
    amb = S.ambient
    ball = pair.ball()
    comp = ball.compiled
    nX = pair.X.ambient.size
    w = cp.Variable(comp.nw)
    cons = []
    for a in comp.atoms:
        v = cp.Variable(a.G.shape[0])
        cons.append(v == a.G @ w)
        cons += _norm_constraints(v, a, a.bound)
    T = ball.T
    N = amb.size
    if side == "X":
        st = pair.left_state(omega)
        other_dims, other_off = pair.Y.ambient.block_dims, nX
    else:
        st = pair.right_state(omega)
        other_dims, other_off = pair.X.ambient.block_dims, 0
    c = np.concatenate([st.on(S), np.zeros(comp.nw - comp.ncoord)])
    t = cp.Variable()
    o = other_off
    for d in other_dims:
        idx = [o + k * d + l for k in range(d) for l in range(d)]
        Rm = T[idx][:, : comp.ncoord] @ w[: comp.ncoord]
        Im = T[[N + i for i in idx]][:, : comp.ncoord] @ w[: comp.ncoord]
        if d == 1:
            cons.append(Rm[0] <= t)
        elif d == 2:
            tr = 0.5 * (Rm[0] + Rm[3])
            s = cp.hstack([0.5 * (Rm[0] - Rm[3]), Rm[1], Im[1]])
            cons.append(tr + cp.norm(s, 2) <= t)
        else:
            R = cp.reshape(Rm, (d, d), order="C")
            I = cp.reshape(Im, (d, d), order="C")
            E = cp.bmat([[R, -I], [I, R]])
            cons.append(cp.lambda_max(0.5 * (E + E.T)) <= t)
        o += d * d
    prob = cp.Problem(cp.Maximize(c @ w - t), cons)
    _solve(prob, cfg)
    if w.value is None:
        return 0.0
    wv = np.asarray(w.value)
    from .convex_opt import _scale_into
    wv = _scale_into(comp, wv) * wv
    x = S.element(wv[: comp.ncoord])
    xs = amb.blocks(x)
    nb = len(pair.X.ambient.block_dims)
    other = xs[nb:] if side == "X" else xs[:nb]
    lam = max(np.max(np.linalg.eigvalsh(0.5 * (m + m.conj().T))) for m in other)
    return max(0.0, float(np.real(st(x))) - float(lam))


def hausdorff_states(pair: BridgePair, mesh: int = 64, lower_samples: int = 4, seed: int = 0,
                     config: SolverConfig | None = None) -> HausdorffBound:
    """Bounds on the Hausdorff distance between the two state spaces inside ``X + Y``.

    Upper: sup over sampled extreme states of the distance to the matched
    state (a convex function of the state, so extreme points suffice), or the
    coupling defect when no matchers are given.  Lower: certified distances
    from a few extreme states to the whole other state space.
    """
    rng = np.random.default_rng(seed)
    if pair.to_Y is None or pair.to_X is None:
        cd = coupling_defect(pair, config=config)
        upper, status = cd.upper, cd.status
    else:
        upper, status = 0.0, "sampled"
        for om in extreme_states(pair.X.ambient, mesh, seed):
            upper = max(upper, _matched_rho(pair, om, pair.to_Y(om), config).upper)
        for om in extreme_states(pair.Y.ambient, mesh, seed):
            upper = max(upper, _matched_rho(pair, pair.to_X(om), om, config).upper)
    lower, witness = 0.0, None
    for side, amb in (("X", pair.X.ambient), ("Y", pair.Y.ambient)):
        cands = extreme_states(amb, max(lower_samples, 1), seed)
        idx = rng.permutation(len(cands))[:lower_samples]
        for i in sorted(idx):
            v = _distance_to_side(pair, cands[i], side, config)
            if v > lower:
                lower, witness = v, (side, cands[i])
    return HausdorffBound(min(lower, upper), upper, witness, status)


def dist_upper(pairs, config: SolverConfig | None = None):
    """Coupling-defect upper bounds, one per bridge pair, valid for every matrix level."""
    return [coupling_defect(p, config=config).upper for p in pairs]
