"""Certified convex optimisation over seminorm balls.

A seminorm tree evaluated on an affine image of coordinates is *compiled*
into atoms ``factor_j * N_j(G_j w + g_j)`` where ``w`` holds the coordinates
and one auxiliary variable per real quotient direction.  The tree value is at
most ``s`` exactly when every atom is, for some auxiliary values.  Balls are
therefore intersections of atom constraints and every linear problem over
them has the explicit dual

    sup c.w  <=  sum_j bound_j N_j^*(y_j)   whenever   sum_j G_j^T y_j = c.

Solvers (HiGHS for polytopes, Clarabel through cvxpy otherwise, a closed form
for single ellipsoids) only propose points; bounds are recomputed here: the
primal point is rescaled to exact feasibility and the dual multipliers are
repaired to satisfy the equality exactly before their objective is evaluated.
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import cvxpy as cp
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection
from scipy.spatial import QhullError

from .opsys_core import MatrixStar, OperatorSubsystem, State, osc_seminorm, real_pair
from .seminorm import (
    Bridge, Grow, LinearMapNorm, Max, QuotientByUnit, Scale, SeminormSpec, _dual_image_norm,
    _image_norm, evaluate, walk,
)

NULL_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, iteration caps and the random seed shared by all solvers."""

    support_tol: float = 1e-8
    projection_tol: float = 1e-7
    seed: int = 0
    max_iter: int = 400
    solver: str = "CLARABEL"

    def solver_kwargs(self):
        if self.solver == "CLARABEL":
            return {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11, "tol_feas": 1e-11,
                    "tol_ktratio": 1e-9, "max_iter": self.max_iter}
        return {}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "SolverConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"solver: unknown keys {sorted(unknown)}")
        return cls(**d)


DEFAULT_CONFIG = SolverConfig()


@dataclass
class SolveResult:
    """Outcome of a certified solve.

    ``lower`` and ``upper`` enclose the optimum.  For maximisation ``value``
    is the certified lower end, for minimisation the certified upper end, so
    ``value - gap <= optimum <= value + gap`` holds in both cases.
    """

    value: float
    certificate: np.ndarray | None
    gap: float
    iterations: int = 0
    status: str = "converged"
    lower: float = float("nan")
    upper: float = float("nan")
    info: dict = field(default_factory=dict)


# ----------------------------------------------------------------- compilation

@dataclass
class Atom:
    G: np.ndarray          # (2m, nw) real-pair image map
    g0: np.ndarray         # (2m,) offset
    p: str
    blocks: tuple | None
    factor: float          # tree value multiplies the atom norm by this
    hermitian: bool = False
    bound: float = np.inf  # ball constraint N(Gw + g0) <= bound

    @property
    def m(self) -> int:
        return self.G.shape[0] // 2

    @property
    def real(self) -> bool:
        m = self.m
        return not np.any(self.G[m:]) and not np.any(self.g0[m:])

    @property
    def polyhedral(self) -> bool:
        if self.p in ("inf", "1"):
            return True
        return self.p == "op" and max(self.blocks) == 1

    def value(self, w) -> float:
        r = self.G @ w + self.g0
        return _image_norm(r[: self.m] + 1j * r[self.m:], self._kind(), self.blocks)

    def dual(self, y) -> float:
        y = self.symmetrize(y)
        return _dual_image_norm(y[: self.m] + 1j * y[self.m:], self._kind(), self.blocks)

    def _kind(self):
        return "inf" if (self.p == "op" and max(self.blocks) == 1) else self.p

    def symmetrize(self, y):
        """Project a multiplier onto the hermitian part of the image space."""
        if not self.hermitian:
            return y
        m = self.m
        z = y[:m] + 1j * y[m:]
        amb = MatrixStar(self.blocks)
        z = 0.5 * (z + amb.adjoint(z))
        return real_pair(z)


def _count_aux(spec) -> int:
    if isinstance(spec, QuotientByUnit):
        return (1 if spec.field == "real" else 2) + _count_aux(spec.child)
    return sum(_count_aux(c) for c in spec.children())


def _hermitian_image(G, g0, blocks) -> bool:
    m = G.shape[0] // 2
    Z = G[:m] + 1j * G[m:]
    z0 = g0[:m] + 1j * g0[m:]
    amb = MatrixStar(blocks)
    for col in list(Z.T) + [z0]:
        if np.max(np.abs(col - amb.adjoint(col)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(col))):
            return False
    return True


@dataclass
class CompiledTree:
    atoms: list
    nw: int
    ncoord: int

    def __post_init__(self):
        self._stack = None
        self._pinv = None
        self._null = None

    @property
    def stack(self) -> np.ndarray:
        if self._stack is None:
            self._stack = np.vstack([a.G for a in self.atoms]) if self.atoms else np.zeros((0, self.nw))
        return self._stack

    @property
    def pinv_transpose(self) -> np.ndarray:
        if self._pinv is None:
            self._pinv = np.linalg.pinv(self.stack.T, rcond=1e-12)
        return self._pinv

    def lineality(self) -> np.ndarray:
        """Orthonormal basis (columns) of the directions on which every atom vanishes."""
        if self._null is None:
            A = self.stack
            if A.shape[0] == 0:
                self._null = np.eye(self.nw)
            else:
                _, s, vt = np.linalg.svd(A, full_matrices=True)
                tol = NULL_TOL * max(1.0, s[0] if s.size else 0.0)
                rank = int(np.sum(s > tol))
                self._null = vt[rank:].T
        return self._null

    def split(self, yfull):
        out, o = [], 0
        for a in self.atoms:
            k = a.G.shape[0]
            out.append(yfull[o:o + k])
            o += k
        return out


def coordinate_map(S: OperatorSubsystem, domain: str = "hermitian") -> np.ndarray:
    """Real-pair matrix sending coordinates to ambient real pairs."""
    Bt = S.basis.T
    if domain == "hermitian":
        return real_pair(Bt)
    if domain == "general":
        return np.block([[Bt.real, -Bt.imag], [Bt.imag, Bt.real]])
    raise ValueError("domain must be 'hermitian' or 'general'")


def is_star_invariant(spec: SeminormSpec, ambient: MatrixStar, n=None, samples: int = 8,
                      seed: int = 7) -> bool:
    """Sampled check of ``spec(x*) == spec(x)``."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = ambient.random_element(rng, hermitian=False)
        a, b = evaluate(spec, x, n), evaluate(spec, ambient.adjoint(x), n)
        if abs(a - b) > 1e-9 * max(1.0, a):
            return False
    return True


def _child_star_invariant(q: QuotientByUnit, root, system: OperatorSubsystem, n=None) -> bool:
    """Sampled *-invariance of a quotient's child on the ambient it acts on."""
    N = q.unit.shape[0]
    amb = system.ambient
    if N != amb.size:
        # inside a bridge: find the matching side by size
        for b in walk(root):
            if isinstance(b, Bridge) and q in walk(b.left) and N == b.split:
                amb = MatrixStar(amb.block_dims[: _blocks_upto(amb, b.split)])
            elif isinstance(b, Bridge) and q in walk(b.right) and N == amb.size - b.split:
                amb = MatrixStar(amb.block_dims[_blocks_upto(amb, b.split):])
        if amb.size != N:
            return False
    return is_star_invariant(q.child, amb, n)


def _blocks_upto(amb: MatrixStar, split: int) -> int:
    tot = 0
    for i, d in enumerate(amb.block_dims):
        if tot == split:
            return i
        tot += d * d
    return len(amb.block_dims)


def _realify_quotients(spec):
    """Replace complex quotients by real ones (valid on hermitian elements of a *-invariant tree)."""
    if isinstance(spec, QuotientByUnit):
        return QuotientByUnit(_realify_quotients(spec.child), spec.unit, "real")
    if isinstance(spec, Max):
        return Max(tuple(_realify_quotients(c) for c in spec.items))
    if isinstance(spec, Scale):
        return Scale(spec.c, _realify_quotients(spec.child))
    if isinstance(spec, Grow):
        return Grow(_realify_quotients(spec.child))
    if isinstance(spec, Bridge):
        return Bridge(_realify_quotients(spec.left), _realify_quotients(spec.right), spec.couplings, spec.split)
    return spec


def compile_tree(spec: SeminormSpec, T: np.ndarray, t0: np.ndarray | None = None,
                 n: float | None = None) -> CompiledTree:
    """Compile ``spec`` evaluated at the affine image ``T w + t0`` (real pairs)."""
    ncoord = T.shape[1]
    naux = _count_aux(spec)
    nw = ncoord + naux
    Tfull = np.hstack([T, np.zeros((T.shape[0], naux))])
    t0 = np.zeros(T.shape[0]) if t0 is None else np.asarray(t0, dtype=float)
    atoms: list[Atom] = []
    counter = [ncoord]

    def rec(node, Tn, tn, factor):
        Nn = Tn.shape[0] // 2
        if isinstance(node, LinearMapNorm):
            if node.weight == 0:
                return
            M = node.M
            if M.shape[1] != Nn:
                raise ValueError(f"linear map expects length {M.shape[1]}, node acts on length {Nn}")
            G = np.vstack([M @ Tn[:Nn], M @ Tn[Nn:]])
            g0 = np.concatenate([M @ tn[:Nn], M @ tn[Nn:]])
            herm = node.p == "op" and _hermitian_image(G, g0, node.blocks)
            atoms.append(Atom(G, g0, node.p, node.blocks, factor * node.weight, herm))
        elif isinstance(node, Max):
            for c in node.items:
                rec(c, Tn, tn, factor)
        elif isinstance(node, Scale):
            rec(node.child, Tn, tn, factor * node.c)
        elif isinstance(node, Grow):
            if n is None:
                raise ValueError("compiling a Grow node needs the family parameter n")
            rec(node.child, Tn, tn, factor * float(n))
        elif isinstance(node, QuotientByUnit):
            e = node.unit
            if e.shape[0] != Nn:
                raise ValueError("quotient unit has the wrong length")
            Tq = Tn.copy()
            k = counter[0]
            Tq[:, k] -= real_pair(e)
            counter[0] += 1
            if node.field == "complex":
                Tq[:, k + 1] -= real_pair(1j * e)
                counter[0] += 1
            rec(node.child, Tq, tn, factor)
        elif isinstance(node, Bridge):
            s = node.split
            rows_x = np.r_[0:s, Nn:Nn + s]
            rows_y = np.r_[s:Nn, Nn + s:2 * Nn]
            rec(node.left, Tn[rows_x], tn[rows_x], factor)
            rec(node.right, Tn[rows_y], tn[rows_y], factor)
            for c in node.couplings:
                rec(c, Tn, tn, factor)
        else:
            raise TypeError(f"unknown node {type(node).__name__}")

    rec(spec, Tfull, t0, 1.0)
    return CompiledTree(atoms, nw, ncoord)


def compile_ball(spec: SeminormSpec, system: OperatorSubsystem, domain: str = "hermitian",
                 n: float | None = None) -> "BallSpec":
    """Unit ball of ``spec`` on ``system`` (compiled lazily)."""
    return BallSpec(spec, system, 1.0, None, domain, n)


def lineality_space(ball) -> np.ndarray:
    comp = ball.compiled if isinstance(ball, BallSpec) else ball
    return comp.lineality()


class BallSpec:
    """``{a in span(S) : spec(a) <= radius}``, optionally with ``||a|| <= cap``.

    ``domain="hermitian"`` uses real coordinates of hermitian elements,
    ``domain="general"`` uses ``(u, v)`` for ``element(u) + i element(v)``.
    """

    def __init__(self, spec: SeminormSpec, system: OperatorSubsystem, radius: float = 1.0,
                 cap: float | None = None, domain: str = "hermitian", n: float | None = None):
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        self.spec = spec
        self.system = system
        self.radius = float(radius)
        self.cap = None if cap is None else float(cap)
        self.domain = domain
        self.n = n
        self._compiled = None
        self._cache: dict = {}

    @property
    def T(self) -> np.ndarray:
        return coordinate_map(self.system, self.domain)

    @property
    def compiled(self) -> CompiledTree:
        if self._compiled is None:
            spec = self.spec
            if self.domain == "hermitian" and any(
                    isinstance(q, QuotientByUnit) and q.field == "complex" for q in walk(spec)):
                # for hermitian x and a *-invariant convex tree, averaging lambda with its
                # conjugate never increases child(x - lambda e)
                quots = [q for q in walk(spec) if isinstance(q, QuotientByUnit)]
                if all(np.allclose(q.unit, np.conj(q.unit)) and _child_star_invariant(q, spec, self.system, self.n)
                       for q in quots):
                    spec = _realify_quotients(spec)
            comp = compile_tree(spec, self.T, None, self.n)
            for a in comp.atoms:
                a.bound = self.radius / a.factor
            if self.cap is not None:
                amb = self.system.ambient
                G = np.hstack([self.T, np.zeros((self.T.shape[0], comp.nw - comp.ncoord))])
                herm = self.domain == "hermitian"
                comp.atoms.append(Atom(G, np.zeros(G.shape[0]), "op", amb.block_dims, 1.0, herm, self.cap))
            self._compiled = comp
        return self._compiled

    @property
    def ncoord(self) -> int:
        return self.compiled.ncoord

    def element(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        k = self.system.dim
        if self.domain == "hermitian":
            return self.system.element(coords[:k])
        return self.system.element(coords[:k], coords[k:2 * k])

    def coordinates(self, x) -> np.ndarray:
        u, v = self.system.coordinates(x)
        return u if self.domain == "hermitian" else np.concatenate([u, v])

    def gauge(self, x) -> float:
        """Smallest ``t`` with ``x`` in ``t`` times the ball."""
        g = evaluate(self.spec, x, self.n) / self.radius
        if self.cap is not None:
            g = max(g, self.system.ambient.op_norm(x) / self.cap)
        return g

    @property
    def polyhedral(self) -> bool:
        return all(a.polyhedral and a.real for a in self.compiled.atoms)

    @property
    def single_ellipsoid(self) -> bool:
        atoms = self.compiled.atoms
        return len(atoms) == 1 and atoms[0].p == "2"


# --------------------------------------------------------------- certificates

def _scale_into(comp: CompiledTree, w):
    """Largest ``t <= 1`` with ``t w`` feasible (all offsets are zero)."""
    t = 1.0
    for a in comp.atoms:
        v = a.value(w)
        if v > a.bound:
            t = min(t, a.bound / v * (1 - 1e-15))
    return t


def _repair(comp: CompiledTree, ys, target):
    """Correct multipliers so that ``sum G_j^T y_j = target`` holds exactly."""
    yfull = np.concatenate(ys) if ys else np.zeros(0)
    resid = target - comp.stack.T @ yfull
    if np.linalg.norm(resid) > 0:
        yfull = yfull + comp.pinv_transpose @ resid
    res = float(np.linalg.norm(target - comp.stack.T @ yfull))
    return comp.split(yfull), res


def _dual_objective(comp, ys):
    return sum(a.bound * a.dual(y) for a, y in zip(comp.atoms, ys))


def _certified_upper(comp, ys, cw):
    """Best certified upper bound over the two sign conventions for ``ys``."""
    best, best_res = np.inf, np.inf
    ys = [a.symmetrize(np.asarray(y, dtype=float)) for a, y in zip(comp.atoms, ys)]
    for sgn in (1.0, -1.0):
        cand = [sgn * y for y in ys]
        raw = np.linalg.norm(cw - comp.stack.T @ np.concatenate(cand)) if cand else np.linalg.norm(cw)
        if raw > 1e-3 * max(1.0, np.linalg.norm(cw)) and sgn < 0 and np.isfinite(best):
            continue
        fixed, res = _repair(comp, cand, cw)
        if res > 1e-9 * max(1.0, np.linalg.norm(cw)):
            continue
        val = _dual_objective(comp, fixed)
        if val < best:
            best, best_res = val, res
    return best, best_res


# ------------------------------------------------------------------- support

def _support_ellipsoid(comp, cw):
    a = comp.atoms[0]
    G = a.G
    y = np.linalg.pinv(G.T, rcond=1e-12) @ cw
    ny = np.linalg.norm(y)
    w = np.linalg.pinv(G, rcond=1e-12) @ (a.bound * y / ny) if ny > 0 else np.zeros(comp.nw)
    return w, [y], 0


def _support_lp(comp, cw):
    nw = comp.nw
    rows, rhs, kinds = [], [], []
    n_t = sum(a.m for a in comp.atoms if a._kind() == "1")
    nx = nw + n_t
    t_off = nw
    layout = []
    for a in comp.atoms:
        Gr = a.G[: a.m]
        if a._kind() == "1":
            m = a.m
            Z = np.zeros((m, nx))
            P = np.hstack([Gr, np.zeros((m, n_t))])
            P[:, t_off:t_off + m] = -np.eye(m)
            N = np.hstack([-Gr, np.zeros((m, n_t))])
            N[:, t_off:t_off + m] = -np.eye(m)
            S = np.zeros((1, nx))
            S[0, t_off:t_off + m] = 1.0
            layout.append(("1", len(rhs), m))
            rows += [P, N, S]
            rhs += [0.0] * m + [0.0] * m + [a.bound]
            t_off += m
            del Z
        else:
            m = a.m
            P = np.hstack([Gr, np.zeros((m, n_t))])
            layout.append(("inf", len(rhs), m))
            rows += [P, -P]
            rhs += [a.bound] * (2 * m)
    A = np.vstack(rows)
    b = np.array(rhs)
    cfull = np.concatenate([-cw, np.zeros(n_t)])
    res = linprog(cfull, A_ub=A, b_ub=b, bounds=[(None, None)] * nx, method="highs")
    if res.status != 0:
        return None
    lam = -np.asarray(res.ineqlin.marginals)
    ys = []
    for (kind, start, m), a in zip(layout, comp.atoms):
        yr = lam[start:start + m] - lam[start + m:start + 2 * m]
        ys.append(np.concatenate([yr, np.zeros(m)]))
    return res.x[:nw], ys, int(getattr(res, "nit", 0))


def _norm_constraints(v, atom: Atom, bound):
    """cvxpy constraints expressing ``N_atom(v) <= bound``."""
    m = atom.m
    kind = atom._kind()
    real = atom.real
    if kind == "2":
        return [cp.norm(v if not real else v[:m], 2) <= bound]
    if kind in ("inf", "1"):
        if real:
            mod = cp.abs(v[:m])
        else:
            mod = cp.norm(cp.vstack([v[:m], v[m:]]), 2, axis=0)
        if kind == "inf":
            return [mod <= bound]
        return [cp.sum(mod) <= bound]
    cons = []
    o = 0
    for d in atom.blocks:
        if d == 1:
            if real:
                cons.append(cp.abs(v[o]) <= bound)
            else:
                cons.append(cp.norm(cp.hstack([v[o], v[m + o]]), 2) <= bound)
        elif d == 2 and atom.hermitian:
            t = 0.5 * (v[o] + v[o + 3])
            s = cp.hstack([0.5 * (v[o] - v[o + 3]), v[o + 1], v[m + o + 1]])
            cons.append(cp.abs(t) + cp.norm(s, 2) <= bound)
        else:
            R = cp.reshape(v[o:o + d * d], (d, d), order="C")
            Im = cp.reshape(v[m + o:m + o + d * d], (d, d), order="C")
            E = cp.bmat([[R, -Im], [Im, R]])
            cons.append(cp.sigma_max(E) <= bound)
        o += d * d
    return cons


def _solve(prob, cfg: SolverConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            # the first solve of a parametrised problem compiles it and can differ in the last
            # bits from later solves; solving twice keeps results independent of call order
            for _ in range(1 if getattr(prob, "_lipqgh_warm", False) else 2):
                prob.solve(solver=cfg.solver, **cfg.solver_kwargs())
            prob._lipqgh_warm = True
        except cp.error.SolverError:
            prob.solve(solver="SCS", eps=1e-9, max_iters=20000)
    return prob.status


def _conic_support_problem(ball: BallSpec):
    key = "support"
    if key not in ball._cache:
        comp = ball.compiled
        w = cp.Variable(comp.nw)
        c = cp.Parameter(comp.nw)
        cons, eqs = [], []
        for a in comp.atoms:
            v = cp.Variable(a.G.shape[0])
            eq = v == a.G @ w
            eqs.append(eq)
            cons.append(eq)
            cons += _norm_constraints(v, a, a.bound)
        prob = cp.Problem(cp.Maximize(c @ w), cons)
        ball._cache[key] = (prob, w, c, eqs)
    return ball._cache[key]


def _support_conic(ball, cw, cfg):
    prob, w, c, eqs = _conic_support_problem(ball)
    c.value = cw
    status = _solve(prob, cfg)
    if w.value is None:
        return None
    ys = [np.asarray(eq.dual_value, dtype=float).reshape(-1) if eq.dual_value is not None
          else np.zeros(eq.args[0].shape[0]) for eq in eqs]
    it = prob.solver_stats.num_iters if prob.solver_stats is not None else 0
    return np.asarray(w.value), ys, int(it or 0)


def support(c, ball: BallSpec, config: SolverConfig | None = None, path: str | None = None) -> SolveResult:
    """``sup_{a in ball} c . a`` with a certified enclosure.

    ``path`` forces ``"ellipsoid"``, ``"lp"`` or ``"conic"``; by default the
    closed form is used for a single 2-norm atom, linear programming for
    polytope balls and a conic solve otherwise.
    """
    cfg = config or DEFAULT_CONFIG
    comp = ball.compiled
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != comp.ncoord:
        raise ValueError(f"functional has length {c.shape[0]}, expected {comp.ncoord}")
    cw = np.concatenate([c, np.zeros(comp.nw - comp.ncoord)])
    scale = np.linalg.norm(c)
    if scale == 0:
        return SolveResult(0.0, np.zeros(comp.ncoord), 0.0, 0, "converged", 0.0, 0.0)
    K = comp.lineality()
    if K.shape[1] and np.max(np.abs(cw @ K)) > 1e-9 * scale:
        return SolveResult(np.inf, None, np.inf, 0, "unbounded", np.inf, np.inf)
    if path is None:
        path = "ellipsoid" if ball.single_ellipsoid else ("lp" if ball.polyhedral else "conic")
    out = None
    if path == "ellipsoid":
        out = _support_ellipsoid(comp, cw)
    elif path == "lp":
        out = _support_lp(comp, cw)
    if out is None:
        path = "conic"
        out = _support_conic(ball, cw, cfg)
    if out is None:
        return SolveResult(np.nan, None, np.inf, 0, "failed", -np.inf, np.inf, {"path": path})
    w, ys, iters = out
    t = _scale_into(comp, w)
    wf = t * w
    lower = float(cw @ wf)
    upper, res = _certified_upper(comp, ys, cw)
    if not np.isfinite(upper):
        upper = np.inf
    if upper < lower:
        # both are certified up to rounding; collapse the interval
        upper = lower = 0.5 * (upper + lower) if upper > lower - 1e-12 * max(1, abs(lower)) else lower
    gap = upper - lower
    status = "converged" if gap <= cfg.support_tol * max(1.0, abs(upper)) else "gap_open"
    return SolveResult(lower, wf[: comp.ncoord], gap, iters, status, lower, upper,
                       {"path": path, "dual_residual": res})


# ---------------------------------------------------------------- projection

def _conic_projection_problem(ball: BallSpec):
    key = "projection"
    if key not in ball._cache:
        comp = ball.compiled
        amb = ball.system.ambient
        Ty = np.hstack([ball.T, np.zeros((ball.T.shape[0], comp.nw - comp.ncoord))])
        w = cp.Variable(comp.nw)
        z = cp.Parameter(Ty.shape[0])
        s = cp.Variable()
        r = cp.Variable(Ty.shape[0])
        req = r == Ty @ w - z
        cons = [req]
        herm = ball.domain == "hermitian"
        resid_atom = Atom(np.eye(Ty.shape[0]), np.zeros(Ty.shape[0]), "op", amb.block_dims, 1.0, herm)
        cons += _norm_constraints(r, resid_atom, s)
        eqs = []
        for a in comp.atoms:
            v = cp.Variable(a.G.shape[0])
            eq = v == a.G @ w
            eqs.append(eq)
            cons.append(eq)
            cons += _norm_constraints(v, a, a.bound)
        prob = cp.Problem(cp.Minimize(s), cons)
        ball._cache[key] = (prob, w, z, req, eqs, Ty, resid_atom)
    return ball._cache[key]


def project_to_ball(a, ball: BallSpec, config: SolverConfig | None = None) -> SolveResult:
    """Operator-norm distance from ``a`` (hermitian ambient vector) to the ball.

    Returns a :class:`SolveResult` whose ``certificate`` is the nearest point
    found (an ambient vector inside the ball), ``upper`` its distance and
    ``lower`` a dual certificate.
    """
    cfg = config or DEFAULT_CONFIG
    amb = ball.system.ambient
    z = amb.as_vector(a)
    if ball.domain != "hermitian":
        raise ValueError("projection is implemented for hermitian balls")
    if ball.system.contains(z, 1e-12) and ball.gauge(z) <= 1.0:
        return SolveResult(0.0, z.copy(), 0.0, 0, "converged", 0.0, 0.0, {"path": "inside"})
    comp = ball.compiled
    prob, w, zpar, req, eqs, Ty, resid_atom = _conic_projection_problem(ball)
    zp = real_pair(z)
    zpar.value = zp
    _solve(prob, cfg)
    if w.value is None:
        return SolveResult(np.nan, None, np.inf, 0, "failed", 0.0, np.inf)
    wv = np.asarray(w.value)
    t = _scale_into(comp, wv)
    y = ball.element(t * wv[: comp.ncoord])
    upper = amb.op_norm(y - z)
    lower = 0.0
    if req.dual_value is not None:
        phi0 = resid_atom.symmetrize(np.asarray(req.dual_value, dtype=float))
        ys0 = [a.symmetrize(np.asarray(eq.dual_value, dtype=float)) if eq.dual_value is not None
               else np.zeros(a.G.shape[0]) for a, eq in zip(comp.atoms, eqs)]
        for sgn in (1.0, -1.0):
            phi = sgn * phi0
            ys = [sgn * v for v in ys0]
            nu = resid_atom.dual(phi)
            if nu > 1.0:
                phi = phi / nu
                ys = [v / nu for v in ys]
            # stationarity in w: Ty^T phi + sum G_j^T y_j = 0
            target = -(Ty.T @ phi)
            fixed, res = _repair(comp, ys, target)
            if res > 1e-9 * max(1.0, np.linalg.norm(target)):
                continue
            lower = max(lower, float(phi @ zp - _dual_objective(comp, fixed)))
    lower = min(lower, upper)
    gap = upper - lower
    status = "converged" if gap <= cfg.projection_tol * max(1.0, upper) else "gap_open"
    it = prob.solver_stats.num_iters if prob.solver_stats is not None else 0
    return SolveResult(upper, y, gap, int(it or 0), status, lower, upper, {"path": "conic"})


# --------------------------------------------------------- partial minimisation

def partial_minimum(bridge: Bridge, X: OperatorSubsystem, Y: OperatorSubsystem, a, side: str,
                    config: SolverConfig | None = None) -> SolveResult:
    """``min_b bridge(a + b)`` with ``a`` fixed on ``side`` and ``b`` hermitian on the other."""
    cfg = config or DEFAULT_CONFIG
    nx, ny = X.ambient.size, Y.ambient.size
    free = Y if side == "X" else X
    a = np.asarray(a, dtype=complex)
    Bt = free.basis.T
    N = nx + ny
    T = np.zeros((2 * N, free.dim))
    t0 = np.zeros(2 * N)
    if side == "X":
        T[nx:N] = Bt.real
        T[N + nx:] = Bt.imag
        t0[:nx], t0[N:N + nx] = a.real, a.imag
    else:
        T[:nx] = Bt.real
        T[N:N + nx] = Bt.imag
        t0[nx:N], t0[N + nx:] = a.real, a.imag
    comp = compile_tree(bridge, T, t0)
    w = cp.Variable(comp.nw)
    s = cp.Variable()
    cons = []
    for at in comp.atoms:
        v = cp.Variable(at.G.shape[0])
        cons.append(v == at.G @ w + at.g0)
        cons += _norm_constraints(v, at, s / at.factor)
    prob = cp.Problem(cp.Minimize(s), cons)
    _solve(prob, cfg)
    if w.value is None:
        return SolveResult(np.nan, None, np.inf, 0, "failed")
    b = free.element(np.asarray(w.value)[: free.dim])
    full = np.concatenate([a, b]) if side == "X" else np.concatenate([b, a])
    upper = evaluate(bridge, full)
    lower = float(prob.value)
    return SolveResult(upper, b, max(upper - lower, 0.0), 0, "converged", lower, upper)


# --------------------------------------------------------- nonconcave maxima

def polytope_halfspaces(ball: BallSpec):
    """Explicit ``A w <= b`` description of a polytope ball (sign-expanded)."""
    comp = ball.compiled
    if not ball.polyhedral:
        raise ValueError("ball is not a polytope")
    A, b = [], []
    for a in comp.atoms:
        Gr = a.G[: a.m]
        if a._kind() == "1":
            rows = [r for r in Gr if np.any(r)]
            for signs in itertools.product((-1.0, 1.0), repeat=len(rows)):
                A.append(np.sum([s * r for s, r in zip(signs, rows)], axis=0) if rows else np.zeros(comp.nw))
                b.append(a.bound)
        else:
            for r in Gr:
                if np.any(r):
                    A.append(r)
                    b.append(a.bound)
                    A.append(-r)
                    b.append(a.bound)
    return np.array(A), np.array(b)


def polytope_vertices(ball: BallSpec, tol: float = 1e-9):
    """All vertices of the polytope ball modulo its lineality space (brute force).

    Returns an array of full ``w`` vectors and the orthonormal basis ``Q`` of
    the complement of the lineality space.
    """
    comp = ball.compiled
    A, b = polytope_halfspaces(ball)
    K = comp.lineality()
    if K.shape[1]:
        Q = np.linalg.svd(np.eye(comp.nw) - K @ K.T)[0][:, : comp.nw - K.shape[1]]
    else:
        Q = np.eye(comp.nw)
    Ar = A @ Q
    r = Q.shape[1]
    # drop duplicate halfspaces
    key = np.round(np.hstack([Ar, b[:, None]]), 12)
    _, uniq = np.unique(key, axis=0, return_index=True)
    uniq = np.sort(uniq)
    Ar, b = Ar[uniq], b[uniq]
    verts = []
    for idx in itertools.combinations(range(Ar.shape[0]), r):
        sub = Ar[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        xi = np.linalg.solve(sub, b[list(idx)])
        if np.all(Ar @ xi <= b + tol * np.maximum(1.0, np.abs(b))):
            verts.append(Q @ xi)
    if not verts:
        return np.zeros((0, comp.nw)), Q
    V = np.array(verts)
    V = V[np.lexsort(np.round(V, 10).T[::-1])]
    keep = [0]
    for i in range(1, V.shape[0]):
        if np.max(np.abs(V[i] - V[keep[-1]])) > 1e-9:
            keep.append(i)
    return V[keep], Q


def vertex_support_oracle(c, ball: BallSpec):
    """Independent brute-force support: maximum of ``c`` over enumerated vertices."""
    comp = ball.compiled
    cw = np.concatenate([np.asarray(c, dtype=float), np.zeros(comp.nw - comp.ncoord)])
    K = comp.lineality()
    if K.shape[1] and np.max(np.abs(cw @ K)) > 1e-9 * max(1.0, np.linalg.norm(cw)):
        return np.inf, None
    V, _ = polytope_vertices(ball)
    vals = V @ cw
    i = int(np.argmax(vals))
    return float(vals[i]), V[i, : comp.ncoord]


def max_nonconcave(objective, ball: BallSpec, restarts: int = 8, seed: int = 0, seeds=None,
                   steps: int = 40, convex: bool = False) -> SolveResult:
    """Best value of ``objective(element)`` over the ball from multistart local search.

    With ``convex=True`` on a bounded polytope ball the maximum over the
    enumerated vertices is exact and the result is marked converged; otherwise
    only a lower bound is returned (``status="gap_open"``).
    """
    comp = ball.compiled
    if convex and ball.polyhedral and comp.lineality()[: comp.ncoord].size == 0:
        V, _ = polytope_vertices(ball)
        best, arg = -np.inf, None
        for v in V:
            val = objective(ball.element(v[: comp.ncoord]))
            if val > best + 1e-15:
                best, arg = val, v[: comp.ncoord]
        return SolveResult(float(best), arg, 0.0, len(V), "converged", float(best), float(best),
                           {"path": "vertices"})
    rng = np.random.default_rng(seed)
    k = comp.ncoord

    def normalise(u):
        g = ball.gauge(ball.element(u))
        return u / g if g > 0 else u

    starts = []
    for s in seeds or []:
        starts.append(normalise(ball.coordinates(s)))
    for _ in range(restarts):
        starts.append(normalise(rng.standard_normal(k)))
    best, arg, evals = -np.inf, None, 0
    for u in starts:
        val = objective(ball.element(u))
        evals += 1
        sigma = 0.3 * max(np.linalg.norm(u), 1e-3)
        for _ in range(steps):
            cand = u + sigma * rng.standard_normal(k)
            g = ball.gauge(ball.element(cand))
            if g > 1:
                cand = cand / g
            cv = objective(ball.element(cand))
            evals += 1
            if cv > val:
                u, val = cand, cv
            else:
                sigma *= 0.7
            if sigma < 1e-6:
                break
        if val > best:
            best, arg = val, u
    return SolveResult(float(best), arg, np.inf, evals, "gap_open", float(best), np.inf,
                       {"path": "multistart"})


# ------------------------------------------------------------- cutting planes

def cutting_plane_max(ball: BallSpec, P: np.ndarray, g, subgrad, init_dirs=None, mesh: int = 64,
                      max_iter: int = 600, rel_tol: float = 1e-4, config: SolverConfig | None = None,
                      batch: int = 12):
    """Enclose ``max g(P a)`` over the ball for a convex ``g`` on a space of dimension <= 4.

    Each support value in direction ``m`` gives the cut ``m . y <= h(m)`` on
    the projected body; the maximum of ``g`` over the vertices of the cut
    polytope is an upper bound and ``g`` at certified feasible points is a
    lower bound.  New cuts are placed along subgradients of ``g`` at the worst
    vertices (up to ``batch`` per round).  ``g`` and ``subgrad`` act on arrays
    of points (one per row).  Returns ``(lower, upper, best_coords, n_solves,
    status)``.
    """
    comp = ball.compiled
    P = np.atleast_2d(np.asarray(P, dtype=float))
    U, s, _ = np.linalg.svd(P, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return 0.0, 0.0, np.zeros(comp.ncoord), 0, "converged"
    V = U[:, s > 1e-12 * s[0]]
    Pr = V.T @ P
    r = Pr.shape[0]
    K = comp.lineality()[: comp.ncoord]
    if K.size and np.max(np.abs(Pr @ K)) > 1e-9:
        return np.inf, np.inf, None, 0, "unbounded"
    cuts_m, cuts_h = [], []
    lower, best_u, solves = 0.0, np.zeros(comp.ncoord), 0
    status = "converged"

    def add_cut(m):
        nonlocal lower, best_u, solves, status
        m = m / np.linalg.norm(m)
        res = support(Pr.T @ m, ball, config)
        solves += 1
        if not np.isfinite(res.upper):
            status = "failed"
            return
        for sg in (1.0, -1.0):
            cuts_m.append(sg * m)
            cuts_h.append(res.upper)
        val = float(g((V @ (Pr @ res.certificate))[None])[0])
        if val > lower:
            lower, best_u = val, res.certificate

    if init_dirs is None:
        if r == 1:
            init_dirs = [np.ones(1)]
        elif r == 2:
            ang = np.pi * (np.arange(mesh) + 0.5) / mesh
            init_dirs = list(np.stack([np.cos(ang), np.sin(ang)], 1))
        else:
            pts = sphere_mesh(2 * mesh, r)
            init_dirs = [p for p in pts if p[np.nonzero(np.abs(p) > 1e-12)[0][0]] > 0]
    for m in init_dirs:
        add_cut(np.asarray(m, dtype=float))
    if status == "failed":
        return lower, np.inf, best_u, solves, status
    upper = np.inf
    for _ in range(max_iter + 1):
        M = np.array(cuts_m)
        h = np.array(cuts_h)
        if r == 1:
            verts = np.array([[h[M[:, 0] > 0].min()], [-h[M[:, 0] < 0].min()]])
        else:
            # inflating the offsets slightly keeps the vertex bound conservative under rounding
            hsp = np.hstack([M, -(h * (1 + 1e-10) + 1e-14)[:, None]])
            try:
                verts = HalfspaceIntersection(hsp, np.zeros(r)).intersections
            except QhullError:
                try:
                    verts = HalfspaceIntersection(hsp, np.zeros(r), qhull_options="Qt Q12").intersections
                except QhullError:
                    status = "gap_open"
                    break
        vals = np.asarray(g(verts @ V.T))
        order = np.argsort(-vals, kind="stable")
        upper = float(vals[order[0]])
        if upper - lower <= rel_tol * max(upper, 1e-300) or r == 1:
            break
        grads = np.asarray(subgrad(verts[order] @ V.T)) @ V
        new = []
        for j, gr in zip(order, grads):
            if vals[j] - lower <= rel_tol * upper or len(new) >= batch:
                break
            nr = np.linalg.norm(gr)
            if nr == 0:
                continue
            gr = gr / nr
            if np.max(M @ gr) > 1 - 1e-12 or any(abs(q @ gr) > 1 - 1e-9 for q in new):
                continue
            new.append(gr)
        if not new:
            break
        for gr in new:
            add_cut(gr)
    else:
        status = "gap_open"
    if upper - lower > rel_tol * max(upper, 1e-300):
        status = "gap_open"
    return lower, max(upper, lower), best_u, solves, status


def sphere_mesh(n: int, dim: int = 3) -> np.ndarray:
    """Near-uniform unit vectors: Fibonacci lattice in 3-D, circle in 2-D."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(ang), np.sin(ang)], 1)
    if dim == 3:
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        rad = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([rad * np.cos(phi), rad * np.sin(phi), z], 1)
    rng = np.random.default_rng(12345)
    pts = rng.standard_normal((n, dim))
    pts = np.vstack([np.eye(dim), -np.eye(dim), pts])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def covering_cosine(points: np.ndarray) -> float:
    """Cosine of the covering angle of unit vectors on the 2-sphere.

    The point of the sphere farthest from the set lies on the normal of a
    facet of the convex hull, at angular distance ``arccos(offset)``.
    """
    from scipy.spatial import ConvexHull

    hull = ConvexHull(points)
    return float(np.min(-hull.equations[:, -1]))


def bloch_map(amb: MatrixStar, block: int) -> np.ndarray:
    """Real matrix sending ambient real pairs of a hermitian element to ``(t, s1, s2, s3)``.

    For a hermitian 2x2 block ``Z = t I + s . sigma`` the eigenvalues are
    ``t +- |s|``.
    """
    if amb.block_dims[block] != 2:
        raise ValueError("Bloch coordinates need a 2x2 block")
    N = amb.size
    o = amb.offsets[block]
    B = np.zeros((4, 2 * N))
    B[0, o] = B[0, o + 3] = 0.5
    B[1, o + 1] = 1.0
    B[2, N + o + 1] = -1.0
    B[3, o] = 0.5
    B[3, o + 3] = -0.5
    return B


# ------------------------------------------------------------------- radius

def _dominating_constant(spec, system, factor=1.0):
    """Largest ``c`` certified by structure with ``spec >= c * osc`` (0 if none found)."""
    best = 0.0
    if isinstance(spec, Max):
        for ch in spec.items:
            best = max(best, _dominating_constant(ch, system, factor))
        return best
    if isinstance(spec, Scale):
        return _dominating_constant(spec.child, system, factor * spec.c)
    if isinstance(spec, QuotientByUnit):
        if np.max(np.abs(spec.unit - system.ambient.identity())) > 1e-12:
            return 0.0
        return _dominating_constant(spec.child, system, factor)
    if isinstance(spec, LinearMapNorm) and spec.p == "op":
        amb = system.ambient
        if tuple(spec.blocks) != amb.block_dims:
            return 0.0
        # the map must multiply every block by a nonnegative scalar
        M = spec.M
        if M.shape != (amb.size, amb.size) or np.any(M - np.diag(np.diag(M))):
            return 0.0
        c = []
        for o, d in zip(amb.offsets, amb.block_dims):
            dg = np.diag(M)[o:o + d * d]
            if np.ptp(dg) > 0:
                return 0.0
            c.append(dg[0])
        return factor * spec.weight * max(min(c), 0.0)
    return 0.0


@dataclass(frozen=True)
class _RadiusResult:
    lo: float
    hi: float
    method: str
    status: str
    witness: np.ndarray | None


def radius_enclosure(X, mesh: int = 256, budget: int = 4000, max_iter: int = 600, rel_tol: float = 1e-4,
                     sample_pairs: int = 12, seed: int = 0, config: SolverConfig | None = None):
    from .seminorm import RadiusInterval

    S = X.system
    amb = S.ambient
    ball = BallSpec(X.L, S, 1.0)
    comp = ball.compiled
    K = comp.lineality()[: comp.ncoord]
    # the ball must be bounded modulo the unit
    e_coord = np.zeros(S.dim)
    e_coord[0] = 1.0
    if K.size and np.linalg.norm(K - np.outer(e_coord, e_coord @ K)) > 1e-8:
        return RadiusInterval(np.inf, np.inf, "unbounded", "unbounded")
    lower, witness = 0.0, None
    uppers = {}

    def take(u):
        nonlocal lower, witness
        if u is None:
            return
        a = S.element(u)
        o = osc_seminorm(S, a)
        if o > lower:
            lower, witness = o, a

    for w in X.witnesses:
        if amb.is_hermitian(w):
            Lw = evaluate(X.L, w)
            if Lw > 0:
                o = osc_seminorm(S, w) / Lw
                if o > lower:
                    lower, witness = o, w / Lw

    if amb.commutative:
        m = amb.total_dim
        if m * (m - 1) // 2 <= budget:
            pts = [State.point(amb, i).on(S) for i in range(m)]
            best = 0.0
            for i in range(m):
                for j in range(i + 1, m):
                    res = support(pts[i] - pts[j], ball, config)
                    best = max(best, res.upper / 2)
                    take(res.certificate)
            uppers["pairs"] = best
    elif amb.block_dims == (2,):
        B = bloch_map(amb, 0)[1:]
        P = B @ ball.T[:, : comp.ncoord]
        lo, hi, u, _, st = cutting_plane_max(
            ball, P, lambda Y: np.linalg.norm(Y, axis=1),
            lambda Y: Y / np.maximum(np.linalg.norm(Y, axis=1, keepdims=True), 1e-300), mesh=mesh // 4 if mesh >= 8 else 2,
            max_iter=max_iter, rel_tol=rel_tol / 4, config=config)
        take(u)
        uppers["cutting-plane"] = hi
    c = _dominating_constant(X.L, S)
    if c > 0:
        uppers["domination"] = 1.0 / c
    if not uppers and comp.ncoord - 1 <= budget:
        # bounding box in Hilbert-Schmidt orthonormal coordinates orthogonal to e
        tot = 0.0
        for i in range(1, comp.ncoord):
            ci = np.zeros(comp.ncoord)
            ci[i] = 1.0
            res = support(ci, ball, config)
            tot += res.upper ** 2
            take(res.certificate)
        uppers["box"] = float(np.sqrt(tot))
    # sampled pairs of pure states for the lower end
    rng = np.random.default_rng(seed)
    if not amb.commutative:
        pairs = []
        for b, d in enumerate(amb.block_dims):
            if len(pairs) >= sample_pairs:
                break
            if d == 2:
                for axis in np.eye(3):
                    pairs.append((State.bloch(amb, b, axis), State.bloch(amb, b, -axis)))
            elif d == 1:
                continue
            else:
                pairs.append((State.random(amb, rng, pure=True), State.random(amb, rng, pure=True)))
        for s1, s2 in pairs[:sample_pairs]:
            res = support(s1.on(S) - s2.on(S), ball, config)
            take(res.certificate)
    if not uppers:
        return RadiusInterval(lower, np.inf, "sampled", "gap_open", witness)
    method = min(uppers, key=uppers.get)
    hi = max(uppers[method], lower)
    status = "converged" if hi - lower <= rel_tol * hi else "gap_open"
    return RadiusInterval(lower, hi, method, status, witness)
