"""Operator systems realised inside finite direct sums of matrix algebras.

An element of ``M_{d1} + ... + M_{dm}`` is stored as one flat complex vector:
every block flattened row-major, blocks concatenated in order.  All norms and
orders are computed in this concrete representation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SPAN_TOL = 1e-10
HERM_TOL = 1e-10
UNITAL_TOL = 1e-9


class MatrixStar:
    """A finite direct sum of full matrix algebras with blockwise operations.

    Parameters
    ----------
    block_dims : sequence of int
        Sizes ``d_1, ..., d_m`` of the diagonal blocks.
    """

    def __init__(self, block_dims):
        dims = tuple(int(d) for d in block_dims)
        if len(dims) == 0 or min(dims) < 1:
            raise ValueError("block_dims must be a non-empty list of positive integers")
        self.block_dims = dims
        sizes = [d * d for d in dims]
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(sizes)]))
        self.size = self.offsets[-1]
        # equal-size blocks are gathered so norms and products run batched
        by_dim: dict[int, list[int]] = {}
        for i, d in enumerate(dims):
            by_dim.setdefault(d, []).append(i)
        self._groups = []
        for d, members in sorted(by_dim.items()):
            idx = np.array(
                [np.arange(self.offsets[i], self.offsets[i] + d * d).reshape(d, d) for i in members]
            )
            self._groups.append((d, np.array(members), idx))

    def __eq__(self, other):
        return isinstance(other, MatrixStar) and other.block_dims == self.block_dims

    def __hash__(self):
        return hash(self.block_dims)

    def __repr__(self):
        return f"MatrixStar({list(self.block_dims)})"

    @property
    def commutative(self) -> bool:
        return max(self.block_dims) == 1

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    def blocks(self, x):
        x = np.asarray(x)
        return [x[o:o + d * d].reshape(d, d) for o, d in zip(self.offsets, self.block_dims)]

    def flat(self, blocks) -> np.ndarray:
        if len(blocks) != len(self.block_dims):
            raise ValueError(f"expected {len(self.block_dims)} blocks, got {len(blocks)}")
        parts = []
        for b, d in zip(blocks, self.block_dims):
            b = np.asarray(b, dtype=complex)
            if b.shape != (d, d):
                raise ValueError(f"block of shape {b.shape} where ({d}, {d}) was expected")
            parts.append(b.reshape(-1))
        return np.concatenate(parts)

    def as_vector(self, a) -> np.ndarray:
        """Accept either a flat ambient vector or a list of blocks."""
        if isinstance(a, (list, tuple)) and len(a) == len(self.block_dims) and all(
            np.ndim(b) == 2 for b in a
        ):
            return self.flat(a)
        v = np.asarray(a, dtype=complex).reshape(-1)
        if v.shape[0] != self.size:
            raise ValueError(f"ambient vector must have length {self.size}, got {v.shape[0]}")
        return v

    def identity(self) -> np.ndarray:
        return self.flat([np.eye(d) for d in self.block_dims])

    def matrix_unit(self, block: int, k: int, l: int) -> np.ndarray:
        x = np.zeros(self.size, dtype=complex)
        d = self.block_dims[block]
        x[self.offsets[block] + k * d + l] = 1.0
        return x

    def stacked(self, x):
        """Yield ``(d, stack)`` with ``stack`` of shape (n_blocks, d, d) per block size."""
        x = np.asarray(x)
        for d, _, idx in self._groups:
            yield d, x[idx]

    def product(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        out = np.empty(self.size, dtype=complex)
        for d, _, idx in self._groups:
            out[idx] = np.matmul(x[idx], y[idx])
        return out

    def adjoint(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        out = np.empty(self.size, dtype=complex)
        for d, _, idx in self._groups:
            out[idx] = np.conj(np.swapaxes(x[idx], 1, 2))
        return out

    def block_norms(self, x) -> np.ndarray:
        """Largest singular value of every block, in block order."""
        x = np.asarray(x)
        out = np.empty(len(self.block_dims))
        for d, members, idx in self._groups:
            st = x[idx]
            if d == 1:
                out[members] = np.abs(st[:, 0, 0])
            else:
                out[members] = np.linalg.norm(st, ord=2, axis=(1, 2))
        return out

    def op_norm(self, x) -> float:
        return float(np.max(self.block_norms(x)))

    def nuclear_norm(self, x) -> float:
        """Dual of the operator norm for the pairing ``Re tr(y* x)``."""
        x = np.asarray(x)
        total = 0.0
        for d, _, idx in self._groups:
            st = x[idx]
            if d == 1:
                total += float(np.sum(np.abs(st)))
            else:
                total += float(np.sum(np.linalg.svd(st, compute_uv=False)))
        return total

    def eigvalsh(self, x) -> np.ndarray:
        """All eigenvalues of a hermitian element, concatenated over blocks."""
        x = np.asarray(x)
        vals = []
        for d, _, idx in self._groups:
            st = x[idx]
            st = 0.5 * (st + np.conj(np.swapaxes(st, 1, 2)))
            vals.append(np.linalg.eigvalsh(st).reshape(-1))
        return np.concatenate(vals)

    def is_hermitian(self, x, tol: float = HERM_TOL) -> bool:
        x = np.asarray(x, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
        return bool(np.max(np.abs(x - self.adjoint(x))) <= tol * scale)

    def direct_sum(self, other: "MatrixStar") -> "MatrixStar":
        return MatrixStar(self.block_dims + other.block_dims)

    def random_element(self, rng, hermitian: bool = True) -> np.ndarray:
        x = rng.standard_normal(self.size) + 1j * rng.standard_normal(self.size)
        if hermitian:
            x = 0.5 * (x + self.adjoint(x))
        return x

    def hermitian_units(self) -> list[np.ndarray]:
        """Hilbert-Schmidt orthonormal hermitian basis of the whole algebra."""
        out = []
        for b, d in enumerate(self.block_dims):
            for k in range(d):
                out.append(self.matrix_unit(b, k, k))
            for k in range(d):
                for l in range(k + 1, d):
                    ekl, elk = self.matrix_unit(b, k, l), self.matrix_unit(b, l, k)
                    out.append((ekl + elk) / np.sqrt(2))
                    out.append(1j * (ekl - elk) / np.sqrt(2))
        return out


def real_pair(x) -> np.ndarray:
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag])


def _hs_orthonormalize(vectors, tol: float = SPAN_TOL):
    """Orthonormalize complex vectors for the real inner product ``Re <a, b>``.

    Returns the kept vectors and the indices of the inputs that were kept.
    """
    kept, idx = [], []
    for i, v in enumerate(vectors):
        w = np.array(v, dtype=complex)
        for _ in range(2):
            for q in kept:
                w = w - np.real(np.vdot(q, w)) * q
        nrm = np.linalg.norm(w)
        if nrm > tol * max(1.0, np.linalg.norm(v)):
            kept.append(w / nrm)
            idx.append(i)
    return kept, idx


class OperatorSubsystem:
    """A unital self-adjoint subspace of a :class:`MatrixStar`.

    The subspace is described by hermitian elements ``b_0 = e, b_1, ..., b_k``.
    After construction ``b_1..b_k`` are replaced by a Hilbert-Schmidt
    orthonormal basis of the part of the span orthogonal to ``e``, so real
    coordinate vectors ``u`` describe hermitian elements ``sum u_i b_i`` and
    general elements are ``element(u) + 1j * element(v)``.
    """

    def __init__(self, ambient: MatrixStar, herm_basis, name: str | None = None):
        self.ambient = ambient
        self.name = name
        vecs = [ambient.as_vector(b) for b in herm_basis]
        if not vecs:
            raise ValueError("basis must contain the identity")
        e = ambient.identity()
        if np.max(np.abs(vecs[0] - e)) > SPAN_TOL:
            raise ValueError("the first basis element must be the identity")
        for i, v in enumerate(vecs):
            if not ambient.is_hermitian(v):
                raise ValueError(f"basis element {i} is not hermitian")
        raw_rank = np.linalg.matrix_rank(np.array([real_pair(v) for v in vecs]), tol=1e-9)
        if raw_rank != len(vecs):
            raise ValueError("basis elements are linearly dependent")
        e_unit = e / np.linalg.norm(e)
        kept, _ = _hs_orthonormalize([e_unit] + vecs[1:])
        self.basis = np.array([e] + [0.5 * (k + ambient.adjoint(k)) for k in kept[1:]])
        self.dim = self.basis.shape[0]
        self._pinv = None

    @classmethod
    def full(cls, ambient: MatrixStar, name: str | None = None) -> "OperatorSubsystem":
        return cls._from_spanning(ambient, ambient.hermitian_units(), name)

    @classmethod
    def _from_spanning(cls, ambient, elements, name=None):
        e = ambient.identity()
        kept, _ = _hs_orthonormalize([e / np.linalg.norm(e)] + [ambient.as_vector(x) for x in elements])
        return cls(ambient, [e] + kept[1:], name=name)

    @classmethod
    def span_of(cls, ambient: MatrixStar, elements, name: str | None = None) -> "OperatorSubsystem":
        """Smallest operator system containing ``e`` and the given elements.

        Non-hermitian inputs contribute their real and imaginary parts.
        """
        herm = []
        for x in elements:
            x = ambient.as_vector(x)
            herm.append(0.5 * (x + ambient.adjoint(x)))
            herm.append(-0.5j * (x - ambient.adjoint(x)))
        return cls._from_spanning(ambient, herm, name)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"OperatorSubsystem{label}(blocks={list(self.ambient.block_dims)}, dim={self.dim})"

    @property
    def unit(self) -> np.ndarray:
        return self.basis[0]

    @property
    def is_full(self) -> bool:
        return self.dim == sum(d * d for d in self.ambient.block_dims)

    def element(self, u, v=None) -> np.ndarray:
        x = np.asarray(u, dtype=float) @ self.basis
        if v is not None:
            x = x + 1j * (np.asarray(v, dtype=float) @ self.basis)
        return x

    def _pseudo(self):
        if self._pinv is None:
            self._pinv = np.linalg.pinv(real_pair(self.basis.T))
        return self._pinv

    def coordinates(self, x, tol: float = 1e-8):
        """Return ``(u, v)`` with ``x = element(u) + i element(v)``.

        Raises ValueError when ``x`` is not in the span (relative residual > tol).
        """
        x = self.ambient.as_vector(x)
        h = 0.5 * (x + self.ambient.adjoint(x))
        k = -0.5j * (x - self.ambient.adjoint(x))
        P = self._pseudo()
        u = P @ real_pair(h)
        v = P @ real_pair(k)
        res = np.linalg.norm(self.element(u, v) - x)
        if res > tol * max(1.0, np.linalg.norm(x)):
            raise ValueError(f"element is not in the subsystem (residual {res:.3e})")
        return u, v

    def contains(self, x, tol: float = 1e-8) -> bool:
        try:
            self.coordinates(x, tol)
        except ValueError:
            return False
        return True

    def project(self, x) -> np.ndarray:
        """Hilbert-Schmidt orthogonal projection onto the complex span."""
        x = self.ambient.as_vector(x)
        q = self.basis[1:]
        e = self.unit / np.linalg.norm(self.unit)
        out = np.vdot(e, x) * e
        if q.shape[0]:
            out = out + (np.conj(q) @ x) @ q
        return out

    def orthonormal_basis(self) -> np.ndarray:
        e = self.unit / np.linalg.norm(self.unit)
        return np.vstack([e[None, :], self.basis[1:]])

    def direct_sum(self, other: "OperatorSubsystem", name: str | None = None) -> "OperatorSubsystem":
        amb = self.ambient.direct_sum(other.ambient)
        n1 = self.ambient.size
        e = amb.identity()
        elems = [np.concatenate([self.unit, np.zeros(other.ambient.size)])]
        elems += [np.concatenate([b, np.zeros(other.ambient.size)]) for b in self.basis[1:]]
        elems += [np.concatenate([np.zeros(n1), b]) for b in other.basis[1:]]
        return OperatorSubsystem(amb, [e] + elems, name=name)

    def to_json(self) -> str:
        return json.dumps(
            {
                "blocks": list(self.ambient.block_dims),
                "basis": [[[float(z.real), float(z.imag)] for z in b] for b in self.basis],
            }
        )

    @classmethod
    def from_dict(cls, data, name: str | None = None) -> "OperatorSubsystem":
        if "blocks" not in data:
            raise ValueError("system: missing key 'blocks'")
        amb = MatrixStar(data["blocks"])
        if "basis" not in data:
            return cls.full(amb, name=name)
        basis = []
        for i, b in enumerate(data["basis"]):
            arr = np.asarray(b, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError(f"system.basis[{i}]: expected a list of [re, im] pairs")
            basis.append(arr[:, 0] + 1j * arr[:, 1])
        return cls(amb, basis, name=name)

    @classmethod
    def from_json(cls, text: str, name: str | None = None) -> "OperatorSubsystem":
        return cls.from_dict(json.loads(text), name=name)


class State:
    """A state of an ambient algebra, stored as one density block per block.

    ``omega(a) = sum_i tr(rho_i a_i)``.  States on a subsystem are the
    restrictions of ambient states.
    """

    def __init__(self, ambient: MatrixStar, rho, check: bool = True):
        self.ambient = ambient
        self.rho = [np.asarray(r, dtype=complex) for r in rho]
        if len(self.rho) != len(ambient.block_dims):
            raise ValueError("one density block per ambient block is required")
        for r, d in zip(self.rho, ambient.block_dims):
            if r.shape != (d, d):
                raise ValueError("density block has the wrong shape")
        if check:
            self.validate()
        # omega(a) = f . a as a bilinear pairing with the flat vector of rho_i^T
        self.functional = ambient.flat([r.T for r in self.rho])

    def validate(self, tol: float = UNITAL_TOL):
        total = sum(np.trace(r) for r in self.rho)
        if abs(total - 1.0) > tol:
            raise ValueError(f"state is not unital: total trace {total.real:.12g}")
        for r in self.rho:
            if np.max(np.abs(r - r.conj().T)) > 1e-9:
                raise ValueError("density block is not hermitian")
            if r.shape[0] and np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T))) < -1e-9:
                raise ValueError("density block is not positive semidefinite")

    def __call__(self, a) -> complex:
        return complex(self.functional @ self.ambient.as_vector(a))

    def on(self, S: OperatorSubsystem) -> np.ndarray:
        """Real coordinate functional ``c`` with ``omega(element(u)) = c . u``."""
        return np.real(S.basis @ self.functional)

    def dual_vector(self) -> np.ndarray:
        """Real-pair vector ``y`` with ``omega(x) = y . real_pair(x)`` for hermitian x."""
        return real_pair(np.conj(self.functional))

    @classmethod
    def point(cls, ambient: MatrixStar, block: int, vec=None) -> "State":
        """Vector state of one block (``vec`` defaults to the first basis vector)."""
        rho = [np.zeros((d, d), dtype=complex) for d in ambient.block_dims]
        d = ambient.block_dims[block]
        psi = np.zeros(d, dtype=complex) if vec is None else np.asarray(vec, dtype=complex)
        if vec is None:
            psi[0] = 1.0
        psi = psi / np.linalg.norm(psi)
        rho[block] = np.outer(psi, psi.conj())
        return cls(ambient, rho)

    @classmethod
    def bloch(cls, ambient: MatrixStar, block: int, n) -> "State":
        """Pure state of a 2x2 block with Bloch vector ``n``."""
        if ambient.block_dims[block] != 2:
            raise ValueError("Bloch parametrisation needs a 2x2 block")
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        r = 0.5 * (np.eye(2) + n[0] * _PAULI[0] + n[1] * _PAULI[1] + n[2] * _PAULI[2])
        rho = [np.zeros((d, d), dtype=complex) for d in ambient.block_dims]
        rho[block] = r
        return cls(ambient, rho)

    @classmethod
    def mixture(cls, states, weights) -> "State":
        w = np.asarray(weights, dtype=float)
        amb = states[0].ambient
        rho = [sum(wi * s.rho[i] for wi, s in zip(w, states)) for i in range(len(amb.block_dims))]
        return cls(amb, rho)

    @classmethod
    def tracial(cls, ambient: MatrixStar) -> "State":
        n = ambient.total_dim
        return cls(ambient, [np.eye(d) / n for d in ambient.block_dims])

    @classmethod
    def random(cls, ambient: MatrixStar, rng, pure: bool = False) -> "State":
        if pure:
            sizes = np.array(ambient.block_dims, dtype=float)
            block = int(rng.choice(len(sizes), p=sizes / sizes.sum()))
            d = ambient.block_dims[block]
            return cls.point(ambient, block, rng.standard_normal(d) + 1j * rng.standard_normal(d))
        rho = []
        for d in ambient.block_dims:
            g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            rho.append(g @ g.conj().T)
        total = sum(np.trace(r).real for r in rho)
        return cls(ambient, [r / total for r in rho])


_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli():
    return _PAULI


def order_norm(S: OperatorSubsystem, a, flag: bool = False):
    """Order-unit norm ``inf{r : -r e <= a <= r e}``.

    For hermitian ``a`` this is the largest absolute eigenvalue over blocks.
    For a non-hermitian input the ambient operator norm is returned and, with
    ``flag=True``, the second return value reports the general-element case.
    """
    x = S.ambient.as_vector(a)
    general = not S.ambient.is_hermitian(x)
    if general:
        val = S.ambient.op_norm(x)
    else:
        val = float(np.max(np.abs(S.ambient.eigvalsh(x))))
    return (val, general) if flag else val


def osc_seminorm(S: OperatorSubsystem, a) -> float:
    """``inf_lambda ||a - lambda e||`` for hermitian ``a``: half the eigenvalue spread."""
    ev = S.ambient.eigvalsh(S.ambient.as_vector(a))
    return float(0.5 * (np.max(ev) - np.min(ev)))


def kadison_hat(S: OperatorSubsystem, a, omega: State) -> float:
    """Evaluate the affine function ``omega -> omega(a)`` at a state."""
    if omega.ambient != S.ambient:
        raise ValueError("state lives on a different ambient algebra")
    omega.validate()
    val = omega(a)
    return float(val.real) if abs(val.imag) <= 1e-12 * max(1.0, abs(val)) else val


@dataclass(frozen=True)
class ProductDefect:
    """How far a subsystem is from being closed under multiplication.

    ``defect`` is the Hilbert-Schmidt norm of the bilinear map
    ``(a, b) -> (1 - P)(ab)`` on the hermitian part, which does not depend on
    the chosen orthonormal basis.  ``witness_pair`` indexes the orthonormal
    basis pair with the largest residual and ``witness_residual`` is that
    residual.
    """

    defect: float
    witness_pair: tuple[int, int]
    witness_residual: float
    witness_product: np.ndarray | None = None

    def closed(self, tol: float = SPAN_TOL) -> bool:
        return self.defect <= tol


def product_defect(S: OperatorSubsystem) -> ProductDefect:
    Q = S.orthonormal_basis()
    amb = S.ambient
    m = Q.shape[0]
    total = 0.0
    best, best_pair, best_prod = -1.0, (0, 0), None
    for i in range(m):
        # products Q_i Q_j for every j at once, then the residual off the span
        prods = np.empty((m, amb.size), dtype=complex)
        for d, _, idx in amb._groups:
            prods[:, idx] = np.matmul(Q[i][idx], Q[:, idx])
        resid = prods - (np.conj(Q) @ prods.T).T @ Q
        r = np.linalg.norm(resid, axis=1)
        total += float(r @ r)
        j = int(np.argmax(r))
        if r[j] > best + 1e-15:
            best, best_pair, best_prod = float(r[j]), (i, j), prods[j].copy()
    defect = float(np.sqrt(total))
    if defect <= SPAN_TOL:
        defect = 0.0
    return ProductDefect(defect, best_pair, max(best, 0.0), best_prod)
