"""Defect curves, Leibniz constants, limit systems and state-space shapes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .convex_opt import (BallSpec, SolverConfig, compile_tree, coordinate_map, max_nonconcave, project_to_ball,
                         sphere_mesh)
from .opsys_core import MatrixStar, OperatorSubsystem, ProductDefect, State, product_defect
from .seminorm import LinearMapNorm, LipNormedSystem, Max, SeminormSpec, evaluate

PRODUCT_TOL = 1e-10
COND_WARN = 1e12
TAIL_FACTOR = 8


# ------------------------------------------------------------------ curves

@dataclass
class EpsCurve:
    """Sampled enclosure ``eps_lower(r) <= eps(r) <= eps_upper(r)``."""

    system_id: str
    r: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    status: list = field(default_factory=list)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(np.diff(self.r) <= 0):
            raise ValueError("r grid must be strictly increasing")
        if not self.status:
            self.status = ["converged" if u - l <= 1e-6 else "gap_open" for l, u in zip(self.lower, self.upper)]

    @property
    def grid(self):
        return list(zip(self.r.tolist(), self.lower.tolist(), self.upper.tolist()))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def envelope(self) -> "EpsCurve":
        """Monotone envelopes: eps is non-increasing in ``r``."""
        up = np.minimum.accumulate(self.upper)
        lo = np.maximum.accumulate(self.lower[::-1])[::-1]
        lo = np.minimum(lo, up)
        return EpsCurve(self.system_id, self.r.copy(), lo, up, list(self.status))

    def at(self, r: float):
        """Enclosure at an arbitrary ``r`` from monotonicity of the envelopes."""
        env = self.envelope()
        i = np.searchsorted(env.r, r, side="right") - 1
        upper = env.upper[i] if i >= 0 else np.inf
        j = np.searchsorted(env.r, r, side="left")
        lower = env.lower[j] if j < len(env.r) else 0.0
        return float(lower), float(upper)


def _generic_upper(r: float, R: float) -> float:
    # y = lambda e with |lambda| <= r R and spec(x*x) in [0, R^2]
    return R * R - min(R * R / 2, r * R)


def _unit_lip_ball(X: LipNormedSystem) -> BallSpec:
    return BallSpec(X.L, X.system, 1.0, cap=X.R, domain="general")


def _square(amb: MatrixStar, x):
    return amb.product(amb.adjoint(x), x)


def _normalised_witnesses(X: LipNormedSystem):
    out = []
    for w in X.witnesses:
        ln = X.lip_norm(w)
        if ln > 0:
            out.append(w / ln)
    return out


def epsilon_curve(X: LipNormedSystem, r_grid, budget: int = 6, steps: int = 12, seed: int = 0,
                  search: bool | None = None, config: SolverConfig | None = None) -> EpsCurve:
    """Enclose ``eps(r) = sup_{||x||_L<=1} inf_{||y||_L<=r} ||y - x* x||`` on a grid.

    The inner distance is a certified projection onto the Lip ball of radius
    ``r`` (hermitian ``y`` suffices since ``x* x`` is hermitian and the ball
    is *-invariant).  The outer supremum is searched from the structured
    witnesses and ``budget`` random restarts, giving lower ends only.  Upper
    ends come from ``y = lambda e``, from ``y = t x* x`` with the analytic
    Leibniz constant ``C`` and from ``eps(r) = 0`` for ``r >= C``.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0):
        raise ValueError("r grid must be strictly increasing")
    S, amb = X.system, X.ambient
    R = X.R
    C = X.leibniz(R) if X.leibniz is not None else None
    outer = _unit_lip_ball(X)
    if search is None:
        search = outer.ncoord <= 64
    seeds = _normalised_witnesses(X)
    lowers, uppers, stats = [], [], []
    for r in r_grid:
        up = _generic_upper(r, R)
        if C is not None:
            up = min(up, max(0.0, 1 - r / C) * R * R)
            if r >= C:
                up = 0.0
        if up == 0.0:
            lowers.append(0.0)
            uppers.append(0.0)
            stats.append("converged")
            continue
        inner = BallSpec(X.L, S, float(r), cap=float(r) * R)

        def objective(x, inner=inner):
            z = _square(amb, x)
            z = 0.5 * (z + amb.adjoint(z))
            if S.contains(z, 1e-10) and inner.gauge(z) <= 1.0:
                return 0.0
            return project_to_ball(z, inner, config).lower

        best = 0.0
        for w in seeds:
            best = max(best, objective(w))
        if search and budget > 0:
            res = max_nonconcave(objective, outer, restarts=budget, seed=seed, seeds=seeds, steps=steps)
            # the search only returns certified values of the objective at feasible points
            best = max(best, res.value)
        lowers.append(min(best, up))
        uppers.append(up)
        stats.append("converged" if up - best <= 1e-6 else "gap_open")
    return EpsCurve(X.name, r_grid, lowers, uppers, stats).envelope()


def eps_distance(c1: EpsCurve, c2: EpsCurve):
    """``sup_r |mid_1(r) - mid_2(r)|`` and an uncertainty radius from the interval widths.

    Different grids are merged and both envelopes are read off by
    monotonicity (lower ends from the right, upper ends from the left).
    """
    if c1.r.shape == c2.r.shape and np.array_equal(c1.r, c2.r):
        a, b = c1.envelope(), c2.envelope()
        l1, u1, l2, u2 = a.lower, a.upper, b.lower, b.upper
    else:
        grid = np.union1d(c1.r, c2.r)
        grid = grid[(grid >= max(c1.r[0], c2.r[0])) & (grid <= min(c1.r[-1], c2.r[-1]))]
        if grid.size == 0:
            raise ValueError("curves have disjoint grids")
        e1 = [c1.at(r) for r in grid]
        e2 = [c2.at(r) for r in grid]
        l1, u1 = np.array(e1).T
        l2, u2 = np.array(e2).T
    diff = np.abs(0.5 * (l1 + u1) - 0.5 * (l2 + u2))
    i = int(np.argmax(diff))
    radius = 0.5 * (u1[i] - l1[i]) + 0.5 * (u2[i] - l2[i])
    return float(diff[i]), float(radius)


# -------------------------------------------------------------- Leibniz

def _lip_ratio(X: LipNormedSystem, a, b):
    amb = X.ambient
    ab = amb.product(a, b)
    if not X.system.contains(ab, 1e-9):
        return None
    la, lb = X.lip_norm(a), X.lip_norm(b)
    if la <= 0 or lb <= 0:
        return None
    return X.lip_norm(ab) / (la * lb)


def leibniz_constant_lower(X: LipNormedSystem, samples: int = 32, seed: int = 0) -> float:
    """Best sampled ratio ``||ab||_L / (||a||_L ||b||_L)``: a lower bound for the Leibniz constant."""
    amb = X.ambient
    rng = np.random.default_rng(seed)
    pairs = []
    for w in X.witnesses:
        pairs += [(amb.adjoint(w), w), (w, amb.adjoint(w)), (w, w)]
    e = amb.identity()
    for _ in range(samples):
        u = rng.standard_normal(X.system.dim)
        v = rng.standard_normal(X.system.dim)
        a, b = X.system.element(u, v), X.system.element(rng.standard_normal(X.system.dim))
        pairs += [(a, b), (amb.adjoint(a), a)]
    if X.witnesses:
        pairs.append((e, X.witnesses[0]))
    best = 0.0
    for a, b in pairs:
        q = _lip_ratio(X, a, b)
        if q is not None and q > best:
            best = q
    return float(best)


def f_leibniz_equivalence_check(X: LipNormedSystem, r0: float, samples: int = 32, seed: int = 0,
                                curve: EpsCurve | None = None, config: SolverConfig | None = None):
    """Check ``eps(r0) = 0  <=>  ||x* x||_L <= r0`` whenever ``||x||_L <= 1`` on samples.

    Returns ``True`` when the zero upper bound at ``r0`` holds and no sample
    violates the bound, ``False`` when a sampled violation comes with a
    certified positive lower bound of ``eps(r0)``, and ``None`` otherwise.
    """
    amb = X.ambient
    rng = np.random.default_rng(seed)
    cands = _normalised_witnesses(X)
    for _ in range(samples):
        x = X.system.element(rng.standard_normal(X.system.dim), rng.standard_normal(X.system.dim))
        cands.append(x / X.lip_norm(x))
    worst = 0.0
    for x in cands:
        z = _square(amb, x)
        if X.system.contains(z, 1e-9):
            worst = max(worst, X.lip_norm(0.5 * (z + amb.adjoint(z))))
    violated = worst > r0 * (1 + 1e-9)
    if curve is not None and np.any(np.isclose(curve.r, r0, rtol=0, atol=1e-12)):
        lo, up = curve.at(r0)
    else:
        c = epsilon_curve(X, [r0], budget=0, search=False, config=config)
        lo, up = float(c.lower[0]), float(c.upper[0])
    if not violated and up == 0.0:
        return True
    if violated and lo > 0.0:
        return False
    return None


# ------------------------------------------------------------ limit system

@dataclass
class SeminormFamily:
    """A constant algebra with Lip-seminorms depending on a parameter ``n``.

    ``blowups`` are the atoms multiplied by ``n`` (so ``sup_n L_n(a) < oo``
    exactly on their common kernel); ``member(n)`` builds the system with
    parameter ``n`` and ``base`` is the seminorm kept on the limit subspace.
    """

    name: str
    system: OperatorSubsystem
    base: SeminormSpec
    blowups: list
    params: list
    member: object
    eps_grid: list = field(default_factory=lambda: [2.0])

    def spec(self, n: float) -> SeminormSpec:
        return self.member(n).L

    def is_monotone(self, samples: int = 64, seed: int = 0) -> bool:
        """Sampled check of ``L_n <= L_m`` for consecutive parameters."""
        rng = np.random.default_rng(seed)
        members = [self.member(n) for n in sorted(self.params)]
        for _ in range(samples):
            x = self.system.element(rng.standard_normal(self.system.dim))
            vals = [evaluate(m.L, x) for m in members]
            if any(b < a - 1e-9 * max(1.0, a) for a, b in zip(vals, vals[1:])):
                return False
        return True


@dataclass
class LimitVerdict:
    limit_subspace: OperatorSubsystem
    inherited: bool
    defect: ProductDefect
    eps_tail: float
    eps_tail_lower: float = 0.0
    limit_seminorm: SeminormSpec | None = None
    condition: float = 1.0
    curve: EpsCurve | None = None
    n_tail: float | None = None

    @property
    def consistent(self) -> bool:
        """Finite shadow of the inheritance criterion: small tail iff inherited."""
        return (self.eps_tail <= 1e-6) if self.inherited else (self.eps_tail_lower >= 0.1)

    def to_dict(self):
        basis = [[[float(z.real), float(z.imag)] for z in b] for b in self.limit_subspace.basis]
        return {"subspace_basis": basis, "blocks": list(self.limit_subspace.ambient.block_dims),
                "inherited": bool(self.inherited), "defect": float(self.defect.defect),
                "defect_witness": list(self.defect.witness_pair) if self.defect.witness_pair else None,
                "eps_tail": float(self.eps_tail), "eps_tail_lower": float(self.eps_tail_lower),
                "n_tail": None if self.n_tail is None else float(self.n_tail)}


def limit_subspace(system: OperatorSubsystem, blowups, name: str | None = None):
    """``span(S)`` intersected with the kernel of every blow-up atom; returns ``(subspace, condition)``."""
    if not blowups:
        return system, 1.0
    comp = compile_tree(Max(tuple(blowups)), coordinate_map(system, "hermitian"))
    A = comp.stack
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    tol = 1e-9 * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    # condition over every singular value above machine noise: a huge value means the
    # rank decision (and so the limit subspace) is fragile
    nz = s[s > 64 * np.finfo(float).eps * max(1.0, s[0] if s.size else 0.0)]
    cond = float(nz[0] / nz[-1]) if nz.size else 1.0
    if cond > COND_WARN:
        warnings.warn(f"blow-up maps are nearly singular (condition number {cond:.3g})", RuntimeWarning)
    K = vt[rank:].T[: comp.ncoord]
    elems = [system.element(k) for k in K.T]
    e = system.unit
    if not np.allclose(A @ np.eye(comp.nw)[:, 0], 0):
        raise ValueError("blow-up atoms do not vanish on the unit")
    return OperatorSubsystem.span_of(system.ambient, [e] + elems, name=name), cond


def limit_system(F: SeminormFamily, eps_grid=None, config: SolverConfig | None = None, **eps_kw) -> LimitVerdict:
    """Limit subspace of a family, its product defect and the defect-function tail."""
    sub, cond = limit_subspace(F.system, F.blowups, name=f"{F.name}[limit]")
    dfct = product_defect(sub)
    inherited = dfct.defect <= PRODUCT_TOL
    grid = list(eps_grid) if eps_grid is not None else list(F.eps_grid)
    # the tail stands in for a limsup over n, so the member must be deep enough for the largest r
    n_tail = max(max(F.params), TAIL_FACTOR * max(grid))
    X = F.member(n_tail)
    curve = epsilon_curve(X, [max(grid)], config=config, **eps_kw)
    return LimitVerdict(sub, inherited, dfct, float(curve.upper[-1]), float(curve.lower[-1]), F.base, cond, curve,
                        n_tail)


# ------------------------------------------------------------------ shape

@dataclass
class ShapeTable:
    directions: np.ndarray
    support: np.ndarray
    argmax: np.ndarray
    kind: str
    extreme_points: np.ndarray
    radius: float | None = None


def state_space_shape(S: OperatorSubsystem, directions: int = 64, offset: float = 0.1234,
                      tol: float = 1e-6) -> ShapeTable:
    """Support function of the state space in coordinates ``omega(b_i) / sqrt 2``.

    ``b_i`` is the Hilbert-Schmidt orthonormal hermitian basis orthogonal to
    the unit.  ``h(m) = lambda_max(sum m_i b_i / sqrt 2)`` is exact, and the
    maximising states give boundary points.  Few distinct maximisers mean a
    polytope; a constant support function means a disc.
    """
    amb = S.ambient
    B = S.basis[1:] / np.sqrt(2)
    k = B.shape[0]
    if k == 0:
        return ShapeTable(np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)), "point", np.zeros((1, 0)))
    if k == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif k == 2:
        ang = offset + 2 * np.pi * np.arange(directions) / directions
        dirs = np.stack([np.cos(ang), np.sin(ang)], 1)
    else:
        dirs = sphere_mesh(directions, k)
    h, pts = [], []
    for m in dirs:
        a = m @ B
        best_val, best_idx, best_vec = -np.inf, 0, None
        for i, blk in enumerate(amb.blocks(a)):
            w, v = np.linalg.eigh(0.5 * (blk + blk.conj().T))
            if w[-1] > best_val + 1e-12:
                best_val, best_idx, best_vec = w[-1], i, v[:, -1]
        st = State.point(amb, best_idx, best_vec)
        h.append(best_val)
        pts.append(np.real(np.array([st(b) for b in B])))
    h = np.array(h)
    pts = np.array(pts)
    clusters = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= 1e-6 for q in clusters):
            clusters.append(p)
    ext = np.array(clusters)
    radius = None
    if np.ptp(h) <= tol and k >= 2 and len(clusters) == len(dirs):
        kind = "disc" if k == 2 else "ball"
        radius = float(np.mean(h))
    elif k == 1:
        kind = "segment"
    elif len(clusters) <= max(k + 1, len(dirs) // 4):
        kind = "triangle" if (k == 2 and len(clusters) == 3) else "polytope"
    else:
        kind = "inconclusive"
    return ShapeTable(dirs, h, pts, kind, ext, radius)
