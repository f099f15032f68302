"""Seminorm expression trees and the Lip-norm machinery built on them.

A tree is made of

* :class:`LinearMapNorm` atoms ``weight * ||M x||_p`` where ``M`` is a real
  matrix acting on the flat complex ambient vector ``x``;
* :class:`Max`, :class:`Scale` and :class:`QuotientByUnit` combinators;
* :class:`Bridge` nodes acting on a direct sum ``X + Y``;
* :class:`Grow` nodes, placeholders for multiplication by a family
  parameter ``n`` (see :func:`instantiate`).

Every tree evaluates to a seminorm on the ambient algebra.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .opsys_core import MatrixStar, OperatorSubsystem, State, order_norm, osc_seminorm, real_pair

P_KINDS = ("1", "2", "inf", "op")
QUOTIENT_TOL = 1e-12


class SeminormSpec:
    """Base class of tree nodes."""

    def children(self):
        return ()

    def to_dict(self):
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _norm_p(p: str) -> str:
    p = str(p).lower()
    if p in ("infinity", "max", "np.inf"):
        p = "inf"
    if p not in P_KINDS:
        raise ValueError(f"unknown norm kind {p!r}; expected one of {P_KINDS}")
    return p


@dataclass(frozen=True, eq=False)
class LinearMapNorm(SeminormSpec):
    """``weight * ||M x||_p``.

    ``p`` is ``"1"``, ``"2"``, ``"inf"`` (over complex moduli) or ``"op"``.  For
    ``"op"`` the image is cut into square blocks of sizes ``blocks`` and the
    largest operator norm is taken.
    """

    M: np.ndarray
    p: str = "2"
    weight: float = 1.0
    blocks: tuple | None = None

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "p", _norm_p(self.p))
        if not self.weight >= 0:
            raise ValueError("weight must be non-negative")
        object.__setattr__(self, "weight", float(self.weight))
        if self.p == "op":
            blocks = self.blocks
            if blocks is None:
                d = int(round(np.sqrt(M.shape[0])))
                if d * d != M.shape[0]:
                    raise ValueError("op atoms need square image blocks")
                blocks = (d,)
            blocks = tuple(int(b) for b in blocks)
            if sum(b * b for b in blocks) != M.shape[0]:
                raise ValueError("op block sizes do not match the image dimension")
            object.__setattr__(self, "blocks", blocks)
        elif self.blocks is not None:
            object.__setattr__(self, "blocks", None)

    def image_norm(self, z) -> float:
        return _image_norm(z, self.p, self.blocks)

    def to_dict(self):
        d = {"kind": "linmap", "matrix": self.M.tolist(), "p": self.p, "weight": self.weight}
        if self.blocks is not None:
            d["blocks"] = list(self.blocks)
        return d


@dataclass(frozen=True, eq=False)
class Max(SeminormSpec):
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise ValueError("Max needs at least one child")
        object.__setattr__(self, "items", items)

    def children(self):
        return self.items

    def to_dict(self):
        return {"kind": "max", "children": [c.to_dict() for c in self.items]}


@dataclass(frozen=True, eq=False)
class Scale(SeminormSpec):
    c: float
    child: SeminormSpec

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("scale factor must be positive")
        object.__setattr__(self, "c", float(self.c))

    def children(self):
        return (self.child,)

    def to_dict(self):
        return {"kind": "scale", "c": self.c, "child": self.child.to_dict()}


@dataclass(frozen=True, eq=False)
class QuotientByUnit(SeminormSpec):
    """``x -> min_lambda child(x - lambda unit)`` over real or complex lambda."""

    child: SeminormSpec
    unit: np.ndarray
    field: str = "real"

    def __post_init__(self):
        object.__setattr__(self, "unit", np.asarray(self.unit, dtype=complex).reshape(-1))
        if self.field not in ("real", "complex"):
            raise ValueError("field must be 'real' or 'complex'")

    def children(self):
        return (self.child,)

    def to_dict(self):
        return {
            "kind": "quotient",
            "field": self.field,
            "unit": [[float(z.real), float(z.imag)] for z in self.unit],
            "child": self.child.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class Bridge(SeminormSpec):
    """Seminorm on ``X + Y``: ``max(left(x), right(y), couplings(x + y))``.

    ``split`` is the length of the ambient vector of ``X``.
    """

    left: SeminormSpec
    right: SeminormSpec
    couplings: tuple
    split: int

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        for c in self.couplings:
            if not isinstance(c, LinearMapNorm):
                raise ValueError("bridge couplings must be LinearMapNorm atoms")
        object.__setattr__(self, "split", int(self.split))

    def children(self):
        return (self.left, self.right) + self.couplings

    def to_dict(self):
        return {
            "kind": "bridge",
            "split": self.split,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "couplings": [c.to_dict() for c in self.couplings],
        }


@dataclass(frozen=True, eq=False)
class Grow(SeminormSpec):
    """Multiplication by the family parameter ``n``; removed by :func:`instantiate`."""

    child: SeminormSpec

    def children(self):
        return (self.child,)

    def to_dict(self):
        return {"kind": "grow", "child": self.child.to_dict()}


def from_dict(d, path: str = "seminorm") -> SeminormSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"{path}: expected an object with a 'kind' key")
    kind = d["kind"]
    try:
        if kind == "linmap":
            return LinearMapNorm(
                np.asarray(d["matrix"], dtype=float), d.get("p", "2"), d.get("weight", 1.0),
                tuple(d["blocks"]) if "blocks" in d else None,
            )
        if kind == "max":
            return Max(tuple(from_dict(c, f"{path}.children[{i}]") for i, c in enumerate(d["children"])))
        if kind == "scale":
            return Scale(d["c"], from_dict(d["child"], f"{path}.child"))
        if kind == "quotient":
            u = np.asarray(d["unit"], dtype=float)
            return QuotientByUnit(from_dict(d["child"], f"{path}.child"), u[:, 0] + 1j * u[:, 1],
                                  d.get("field", "real"))
        if kind == "bridge":
            return Bridge(
                from_dict(d["left"], f"{path}.left"), from_dict(d["right"], f"{path}.right"),
                tuple(from_dict(c, f"{path}.couplings[{i}]") for i, c in enumerate(d.get("couplings", []))),
                d["split"],
            )
        if kind == "grow":
            return Grow(from_dict(d["child"], f"{path}.child"))
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if str(exc).startswith(path):
            raise
        raise ValueError(f"{path}: {exc}") from None
    raise ValueError(f"{path}: unknown kind {kind!r}")


def from_json(text: str) -> SeminormSpec:
    return from_dict(json.loads(text))


def walk(spec: SeminormSpec):
    yield spec
    for c in spec.children():
        yield from walk(c)


def instantiate(spec: SeminormSpec, n: float) -> SeminormSpec:
    """Replace every :class:`Grow` node by ``Scale(n, ...)``."""
    if isinstance(spec, Grow):
        return Scale(float(n), instantiate(spec.child, n))
    if isinstance(spec, Max):
        return Max(tuple(instantiate(c, n) for c in spec.items))
    if isinstance(spec, Scale):
        return Scale(spec.c, instantiate(spec.child, n))
    if isinstance(spec, QuotientByUnit):
        return QuotientByUnit(instantiate(spec.child, n), spec.unit, spec.field)
    if isinstance(spec, Bridge):
        return Bridge(instantiate(spec.left, n), instantiate(spec.right, n), spec.couplings, spec.split)
    return spec


def scaled(spec: SeminormSpec, c: float) -> SeminormSpec:
    return Scale(c, spec)


# ---------------------------------------------------------------- evaluation

@lru_cache(maxsize=64)
def _star(dims) -> MatrixStar:
    return MatrixStar(dims)


def _image_norm(z, p: str, blocks=None) -> float:
    z = np.asarray(z)
    if z.size == 0:
        return 0.0
    if p == "2":
        return float(np.linalg.norm(z))
    if p == "inf":
        return float(np.max(np.abs(z)))
    if p == "1":
        return float(np.sum(np.abs(z)))
    return _star(tuple(blocks)).op_norm(z)


def _dual_image_norm(y, p: str, blocks=None) -> float:
    y = np.asarray(y)
    if y.size == 0:
        return 0.0
    if p == "2":
        return float(np.linalg.norm(y))
    if p == "inf":
        return float(np.sum(np.abs(y)))
    if p == "1":
        return float(np.max(np.abs(y)))
    return _star(tuple(blocks)).nuclear_norm(y)


class QuotientError(RuntimeError):
    pass


def _bounded_min(f, bound: float):
    opts = {"xatol": QUOTIENT_TOL * max(1.0, bound), "maxiter": 500}
    res = minimize_scalar(f, bounds=(-bound, bound), method="bounded", options=opts)
    if not res.success:
        raise QuotientError("line search over the unit direction did not converge")
    return float(res.fun), float(res.x)


def _quotient_min(f, bound: float, field: str):
    """Minimise the convex function ``f(lambda)`` over ``|lambda| <= bound``.

    The bounded Brent search stops at a relative tolerance near ``sqrt(eps)``,
    so its answer is polished by a golden-section search (real field) or a
    Nelder-Mead search (complex field) with tight tolerances.
    """
    if bound <= 0:
        return f(0.0), 0.0
    if field == "real":
        fx, x = _bounded_min(f, bound)
        h = max(1e-6 * max(1.0, abs(x)), 1e-9)
        try:
            pol = minimize_scalar(f, bracket=(x - h, x + h), method="golden",
                                  options={"xtol": 1e-15, "maxiter": 400})
            if np.isfinite(pol.fun) and pol.fun < fx and abs(pol.x) <= bound:
                x, fx = float(pol.x), float(pol.fun)
        except (ValueError, RuntimeError):
            pass
        return min([(fx, x), (f(0.0), 0.0)])

    def inner(re):
        val, im = _bounded_min(lambda im: f(re + 1j * im), bound)
        inner.arg[re] = im
        return val

    inner.arg = {}
    _, re = _bounded_min(inner, bound)
    lam = re + 1j * inner.arg.get(re, 0.0)
    h = max(1e-6 * max(1.0, abs(lam)), 1e-9)
    pol = minimize(lambda z: f(z[0] + 1j * z[1]), [lam.real, lam.imag], method="Nelder-Mead",
                   options={"xatol": 1e-15, "fatol": 1e-16, "maxiter": 600,
                            "initial_simplex": [[lam.real, lam.imag], [lam.real + h, lam.imag],
                                                [lam.real, lam.imag + h]]})
    cand = [(float(f(lam)), lam), (f(0.0), 0.0)]
    if abs(complex(*pol.x)) <= bound:
        cand.append((float(pol.fun), complex(*pol.x)))
    return min(cand, key=lambda t: t[0])


def _blocks_of_unit(e):
    """Block sizes of the algebra whose flat identity is ``e`` (``None`` if not an identity)."""
    e = np.asarray(e)
    dims, p = [], 0
    while p < e.shape[0]:
        if abs(e[p] - 1) > 1e-12:
            return None
        q = p + 1
        while q < e.shape[0] and abs(e[q]) <= 1e-12:
            q += 1
        d = max(1, q - p - 1)
        if p + d * d > e.shape[0] or np.max(np.abs(e[p:p + d * d] - np.eye(d).reshape(-1))) > 1e-12:
            return None
        dims.append(d)
        p += d * d
    return dims


_STAR_CACHE: dict = {}


def _real_multiplier_suffices(spec: "QuotientByUnit", x, n) -> bool:
    """For hermitian ``x`` and a *-invariant child a real multiple of the unit is optimal."""
    dims = _blocks_of_unit(spec.unit)
    if dims is None:
        return False
    amb = _star(tuple(dims))
    if not amb.is_hermitian(x):
        return False
    key = (id(spec.child), n)
    if key not in _STAR_CACHE:
        rng = np.random.default_rng(7)
        ok = True
        for _ in range(8):
            z = amb.random_element(rng, hermitian=False)
            a, b = evaluate(spec.child, z, n), evaluate(spec.child, amb.adjoint(z), n)
            if abs(a - b) > 1e-9 * max(1.0, a):
                ok = False
                break
        _STAR_CACHE[key] = (spec.child, ok)
    return _STAR_CACHE[key][1]


def evaluate(spec: SeminormSpec, x, n: float | None = None) -> float:
    """Evaluate a seminorm tree at an ambient vector ``x`` (complex allowed)."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    if isinstance(spec, LinearMapNorm):
        if spec.M.shape[1] != x.shape[0]:
            raise ValueError(f"linear map expects length {spec.M.shape[1]}, got {x.shape[0]}")
        return spec.weight * spec.image_norm(spec.M @ x)
    if isinstance(spec, Max):
        return max(evaluate(c, x, n) for c in spec.items)
    if isinstance(spec, Scale):
        return spec.c * evaluate(spec.child, x, n)
    if isinstance(spec, Grow):
        if n is None:
            raise ValueError("a Grow node needs the family parameter n")
        return float(n) * evaluate(spec.child, x, n)
    if isinstance(spec, QuotientByUnit):
        e = spec.unit
        ce = evaluate(spec.child, e, n)
        cx = evaluate(spec.child, x, n)
        if ce <= 1e-300:
            return cx
        # any minimiser satisfies |lambda| child(e) <= 2 child(x)
        bound = 2.0 * cx / ce + 1e-12
        fld = spec.field
        if fld == "complex" and _real_multiplier_suffices(spec, x, n):
            fld = "real"
        val, _ = _quotient_min(lambda lam: evaluate(spec.child, x - lam * e, n), bound, fld)
        return val
    if isinstance(spec, Bridge):
        vals = [evaluate(spec.left, x[: spec.split], n), evaluate(spec.right, x[spec.split:], n)]
        vals += [evaluate(c, x, n) for c in spec.couplings]
        return max(vals)
    raise TypeError(f"unknown node {type(spec).__name__}")


def quotient_minimizer(spec: QuotientByUnit, x, n: float | None = None):
    """The minimising ``lambda`` of a quotient node (for inspection and tests)."""
    x = np.asarray(x, dtype=complex)
    ce = evaluate(spec.child, spec.unit, n)
    cx = evaluate(spec.child, x, n)
    if ce <= 1e-300:
        return 0.0
    _, lam = _quotient_min(lambda lam: evaluate(spec.child, x - lam * spec.unit, n),
                           2.0 * cx / ce + 1e-12, spec.field)
    return lam


# ------------------------------------------------------------ Lip-normed systems

@dataclass(frozen=True)
class RadiusInterval:
    lo: float
    hi: float
    method: str
    status: str = "converged"
    witness: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def closed(self) -> bool:
        return self.hi - self.lo <= 1e-4 * self.hi


class LipNormedSystem:
    """An operator system with a Lip-seminorm ``L`` and its Lip-norm.

    Parameters
    ----------
    system : OperatorSubsystem
    L : SeminormSpec
    name : str, optional
    leibniz : callable, optional
        ``leibniz(R)`` returns a constant ``C`` with ``||x*x||_L <= C ||x||_L^2``
        for every ``x`` when the Lip-norm is formed with radius ``R``.  Used as
        an upper certificate for the defect function.
    witnesses : list of ambient vectors, optional
        Structured elements tried first in nonconcave searches.
    radius_bounds : (lo, hi), optional
        Skip the radius computation and use a known enclosure.
    """

    def __init__(self, system: OperatorSubsystem, L: SeminormSpec, name: str | None = None,
                 leibniz=None, witnesses=None, radius_bounds=None, radius_options=None):
        self.system = system
        self.L = L
        self.name = name or (system.name or "system")
        self.leibniz = leibniz
        self.witnesses = [system.ambient.as_vector(w) for w in (witnesses or [])]
        self._radius = None
        if radius_bounds is not None:
            lo, hi = radius_bounds
            self._radius = RadiusInterval(float(lo), float(hi), "given")
        self.radius_options = dict(radius_options or {})

    def __repr__(self):
        return f"LipNormedSystem({self.name!r}, dim={self.system.dim})"

    @property
    def ambient(self) -> MatrixStar:
        return self.system.ambient

    @property
    def radius_interval(self) -> RadiusInterval:
        if self._radius is None:
            self._radius = radius(self, **self.radius_options)
        return self._radius

    @property
    def R(self) -> float:
        """Radius used to form unit balls (upper end of the enclosure)."""
        return self.radius_interval.hi

    def L_of(self, a) -> float:
        return evaluate(self.L, self.ambient.as_vector(a))

    def lip_norm(self, a) -> float:
        return lip_norm(self, a)

    def scaled(self, c: float) -> "LipNormedSystem":
        r = None if self._radius is None else (self._radius.lo / c, self._radius.hi / c)
        lb = None
        if self.leibniz is not None:
            lb = lambda R, f=self.leibniz, c=c: f(R * c)  # noqa: E731
        return LipNormedSystem(self.system, Scale(c, self.L), name=f"{self.name}*{c:g}", leibniz=lb,
                               witnesses=self.witnesses, radius_bounds=r, radius_options=self.radius_options)


def lip_norm(X: LipNormedSystem, a) -> float:
    """``max(||a|| / R, L(a))``; general elements use the ambient operator norm."""
    x = X.ambient.as_vector(a)
    nrm = order_norm(X.system, x)
    return max(nrm / X.R, evaluate(X.L, x))


def kernel_is_unit_line(X: LipNormedSystem | tuple, tol: float = 1e-8) -> bool:
    """Decide whether ``L(a) = 0`` forces ``a`` to be a real multiple of ``e``.

    The tree vanishes exactly where every atom vanishes for some choice of the
    quotient variables, so the kernel is a linear projection of the null space
    of the stacked atom maps.  The smallest ``L`` value on the Hilbert-Schmidt
    unit sphere orthogonal to ``e`` is bounded below by the smallest nonzero
    singular value of that map on the complement, which is checked against
    ``tol``.
    """
    from .convex_opt import lineality_space, compile_ball

    S, L = (X.system, X.L) if isinstance(X, LipNormedSystem) else X
    ball = compile_ball(L, S)
    K = lineality_space(ball)
    U = K[: S.dim]
    if U.shape[1] == 0:
        return True
    rank = np.linalg.matrix_rank(U, tol=1e-9)
    if rank == 0:
        return True
    if rank > 1:
        return False
    # the single kernel direction must be the unit
    q, _ = np.linalg.qr(U)
    d = q[:, 0]
    return bool(abs(abs(d[0]) - 1.0) <= tol and np.linalg.norm(d[1:]) <= tol)


def radius(X: LipNormedSystem, mesh: int = 256, budget: int = 4000, max_iter: int = 600,
           rel_tol: float = 1e-4, sample_pairs: int = 12, seed: int = 0) -> RadiusInterval:
    """Enclosure ``[R_lo, R_hi]`` of the radius ``sup{osc(a) : L(a) <= 1}``.

    Lower ends come from certified feasible points (their oscillation).  Upper
    ends are the best of the methods that apply:

    * commutative ambient: exhaustive pairs of point states (exact);
    * one 2x2 block: cutting planes for the largest Bloch vector of the
      projected ball;
    * an operator-norm atom that dominates the order norm after the quotient
      by the unit (``L >= c * osc``);
    * a bounding box of the ball in Hilbert-Schmidt coordinates.
    """
    from . import convex_opt as co

    return co.radius_enclosure(X, mesh=mesh, budget=budget, max_iter=max_iter, rel_tol=rel_tol,
                               sample_pairs=sample_pairs, seed=seed)


def dual_seminorm(X: LipNormedSystem, phi, config=None):
    """``sup |phi(a)|`` over hermitian ``a`` with ``||a||_L <= 1``.

    ``phi`` is a real coordinate functional (length ``X.system.dim``) or a
    :class:`State`-like object with an ``on`` method.
    """
    from .convex_opt import BallSpec, support

    c = phi.on(X.system) if hasattr(phi, "on") else np.asarray(phi, dtype=float)
    ball = BallSpec(X.L, X.system, 1.0, cap=X.R)
    return support(c, ball, config)


@dataclass(frozen=True)
class BridgeCheck:
    passed: bool | None
    max_error: float
    details: list = field(default_factory=list, repr=False)


def verify_bridge(bridge: Bridge, X: OperatorSubsystem, Y: OperatorSubsystem, L_X: SeminormSpec,
                  L_Y: SeminormSpec, tol: float = 1e-6, samples: int = 6, seed: int = 0) -> BridgeCheck:
    """Check that ``bridge`` induces ``L_X`` and ``L_Y`` through the two quotient maps.

    For sampled hermitian ``a`` in ``X`` the convex problem
    ``min_b bridge(a + b)`` is solved and compared with ``L_X(a)``; the same
    is done on the ``Y`` side.
    """
    from .convex_opt import partial_minimum

    if not isinstance(bridge, Bridge):
        raise TypeError("verify_bridge needs a Bridge node")
    rng = np.random.default_rng(seed)
    details, worst, ok = [], 0.0, True
    for side, S_fix, L_fix in (("X", X, L_X), ("Y", Y, L_Y)):
        for k in range(samples):
            u = rng.standard_normal(S_fix.dim)
            a = S_fix.element(u)
            target = evaluate(L_fix, a)
            res = partial_minimum(bridge, X, Y, a, side)
            if res.status == "failed":
                ok = None if ok else ok
                details.append((side, k, target, None))
                continue
            # res.value is a certified upper bound (evaluated at the minimiser);
            # the solver objective is a lower estimate
            err = max(abs(res.value - target), abs(res.lower - target))
            worst = max(worst, err / max(1.0, target))
            details.append((side, k, target, res.value))
            if err > tol * max(1.0, target):
                ok = False
    return BridgeCheck(ok, worst, details)
