"""Finite-dimensional C*-algebras with L-seminorms in max-of-norms normal form.

Self-adjoint elements are handled through real coordinates in a fixed basis
of the self-adjoint part. States are paired with those coordinates, so
``phi(a) = phi.coords @ algebra.coords(a)``, and every seminorm evaluation,
subgradient, linear program and relaxation works on these vectors.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, PropinqError, ResourceError
from .interval import Interval
from .metric_core import FiniteMetricSpace

Element = list  # list of complex blocks

FLOAT_SLACK = 1e-9
LP_SLACK = 1e-8
_BASIS_BUDGET = 40_000_000


def _vec(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in blocks])


class FiniteCStarAlgebra:
    """Direct sum of matrix blocks, or a *-subalgebra given by a self-adjoint basis.

    ``basis`` (optional) lists self-adjoint elements spanning the subalgebra's
    self-adjoint part; the unit must lie in their span. Without it the full
    block algebra is used with Hermitian matrix units as basis.
    """

    def __init__(self, blocks: Sequence[int], basis: Sequence[Element] | None = None, name: str = ""):
        self.blocks = tuple(int(n) for n in blocks)
        if not self.blocks or any(n < 1 for n in self.blocks):
            raise DomainError("blocks must be positive integers")
        self.name = name or "+".join(f"M{n}" if n > 1 else "C" for n in self.blocks)
        if basis is None:
            basis = list(self._matrix_units())
            self.full = True
        else:
            self.full = False
        basis = [self._as_element(b) for b in basis]
        if len(basis) * sum(2 * n * n for n in self.blocks) > _BASIS_BUDGET:
            raise ResourceError("basis too large for dense coordinates", completed=None)
        raw = np.array([_vec(b) for b in basis])
        if not self.full:
            # orthonormalise for the inner product Re tr(a* b)
            q, r = np.linalg.qr(raw.T)
            keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, np.abs(r).max())
            raw = q[:, keep].T
        self._basis_vecs = raw
        self.dim = raw.shape[0]
        self._unit_coords = self.coords(self.unit())
        if np.linalg.norm(self.element_vec(self._unit_coords) - _vec(self.unit())) > 1e-9:
            raise DomainError("unit is not in the span of the basis")

    # -- structure -------------------------------------------------------
    @property
    def commutative(self) -> bool:
        return all(n == 1 for n in self.blocks)

    def _matrix_units(self):
        s = 1.0 / math.sqrt(2.0)
        for bi, n in enumerate(self.blocks):
            for i in range(n):
                for j in range(i, n):
                    if i == j:
                        m = np.zeros((n, n), complex)
                        m[i, i] = 1.0
                        yield self._embed(bi, m)
                    else:
                        m = np.zeros((n, n), complex)
                        m[i, j] = m[j, i] = s
                        yield self._embed(bi, m)
                        m = np.zeros((n, n), complex)
                        m[i, j], m[j, i] = -1j * s, 1j * s
                        yield self._embed(bi, m)

    def _embed(self, index: int, block: np.ndarray) -> Element:
        out = [np.zeros((n, n), complex) for n in self.blocks]
        out[index] = block
        return out

    def _as_element(self, a) -> Element:
        if isinstance(a, np.ndarray) and a.ndim == 2 and len(self.blocks) == 1:
            a = [a]
        if isinstance(a, np.ndarray) and a.ndim == 1 and self.commutative:
            a = [np.array([[x]], complex) for x in a]
        blocks = [np.asarray(b, dtype=complex) for b in a]
        if len(blocks) != len(self.blocks) or any(b.shape != (n, n) for b, n in zip(blocks, self.blocks)):
            raise DomainError("element does not match the block structure")
        return blocks

    def unit(self) -> Element:
        return [np.eye(n, dtype=complex) for n in self.blocks]

    def zero(self) -> Element:
        return [np.zeros((n, n), complex) for n in self.blocks]

    def mul(self, a, b) -> Element:
        return [x @ y for x, y in zip(self._as_element(a), self._as_element(b))]

    def adjoint(self, a) -> Element:
        return [x.conj().T for x in self._as_element(a)]

    def add(self, a, b, t: float = 1.0) -> Element:
        return [x + t * y for x, y in zip(self._as_element(a), self._as_element(b))]

    def scale(self, a, t: complex) -> Element:
        return [t * x for x in self._as_element(a)]

    def norm(self, a) -> float:
        return max(float(np.linalg.norm(x, 2)) for x in self._as_element(a))

    def is_sa(self, a, tol: float = 1e-10) -> bool:
        return all(np.allclose(x, x.conj().T, atol=tol) for x in self._as_element(a))

    def dense(self, a) -> np.ndarray:
        from scipy.linalg import block_diag

        return block_diag(*self._as_element(a))

    def max_eig(self, a) -> float:
        return max(float(np.linalg.eigvalsh((x + x.conj().T) / 2).max()) for x in self._as_element(a))

    # -- coordinates -----------------------------------------------------
    def coords(self, a) -> np.ndarray:
        """Real coordinates of a self-adjoint element (orthogonal projection)."""
        return self._basis_vecs @ _vec(self._as_element(a))

    def pair(self, y) -> np.ndarray:
        """``[Re tr(y* b_j)]_j``: the adjoint of ``element`` applied to any ``y``."""
        return self._basis_vecs @ _vec(self._as_element(y))

    def element_vec(self, c: np.ndarray) -> np.ndarray:
        return self._basis_vecs.T @ np.asarray(c, dtype=float)

    def element(self, c: np.ndarray) -> Element:
        v = self.element_vec(c)
        out, pos = [], 0
        for n in self.blocks:
            re = v[pos : pos + n * n].reshape(n, n)
            im = v[pos + n * n : pos + 2 * n * n].reshape(n, n)
            out.append(re + 1j * im)
            pos += 2 * n * n
        return out

    def basis_element(self, j: int) -> Element:
        e = np.zeros(self.dim)
        e[j] = 1.0
        return self.element(e)

    @property
    def unit_coords(self) -> np.ndarray:
        return self._unit_coords

    def random_sa(self, rng: np.random.Generator, scale: float = 1.0) -> Element:
        return self.element(scale * rng.standard_normal(self.dim))

    def random_coords(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.standard_normal((count, self.dim))

    def total_dim(self) -> int:
        return sum(self.blocks)

    def __repr__(self) -> str:
        return f"<FiniteCStarAlgebra {self.name} dim_sa={self.dim}>"


def commutative_algebra(n: int, name: str = "") -> FiniteCStarAlgebra:
    """``C^n`` with coordinates equal to function values."""
    return FiniteCStarAlgebra([1] * n, name=name or f"C^{n}")


# ---------------------------------------------------------------------------
# states


class State:
    """A state given by block densities against the unnormalised trace."""

    def __init__(self, algebra: FiniteCStarAlgebra, densities: Sequence[np.ndarray], check: bool = True):
        self.algebra = algebra
        self.densities = [np.asarray(d, dtype=complex) for d in algebra._as_element(list(densities))]
        if check:
            total = 0.0
            for d in self.densities:
                if not np.allclose(d, d.conj().T, atol=1e-12):
                    raise DomainError("density is not Hermitian")
                if np.linalg.eigvalsh((d + d.conj().T) / 2).min() < -1e-12:
                    raise DomainError("density is not positive")
                total += float(np.trace(d).real)
            if abs(total - 1.0) > 1e-12:
                raise DomainError(f"densities have total trace {total}, expected 1")
        self.coords = algebra.pair(self.densities)

    def __call__(self, a) -> float:
        return float(self.coords @ self.algebra.coords(a))

    def value(self, a) -> complex:
        return complex(sum(np.trace(d @ x) for d, x in zip(self.densities, self.algebra._as_element(a))))

    @classmethod
    def dirac(cls, algebra: FiniteCStarAlgebra, point: int) -> State:
        if not algebra.commutative:
            raise DomainError("Dirac states need a commutative algebra")
        w = np.zeros(len(algebra.blocks))
        w[point] = 1.0
        return cls.from_weights(algebra, w)

    @classmethod
    def from_weights(cls, algebra: FiniteCStarAlgebra, weights: Sequence[float]) -> State:
        w = np.asarray(weights, dtype=float)
        if not algebra.commutative or w.shape != (len(algebra.blocks),):
            raise DomainError("weights need a commutative algebra of matching size")
        return cls(algebra, [np.array([[x]], complex) for x in w])

    @classmethod
    def vector(cls, algebra: FiniteCStarAlgebra, vec: np.ndarray, block: int = 0) -> State:
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        dens = algebra.zero()
        dens[block] = np.outer(v, v.conj())
        return cls(algebra, dens, check=False)

    @classmethod
    def tracial(cls, algebra: FiniteCStarAlgebra) -> State:
        total = algebra.total_dim()
        return cls(algebra, [np.eye(n, dtype=complex) / total for n in algebra.blocks], check=False)

    def mix(self, other: State, t: float) -> State:
        return State(self.algebra, [(1 - t) * a + t * b for a, b in zip(self.densities, other.densities)], check=False)


# ---------------------------------------------------------------------------
# seminorms


@dataclass(frozen=True)
class PermissibleFunction:
    evaluate: Callable[[float, float, float, float], float]
    leibniz: bool = False
    name: str = "F"

    def __call__(self, x, y, lx, ly) -> float:
        return self.evaluate(x, y, lx, ly)


LEIBNIZ = PermissibleFunction(lambda x, y, lx, ly: x * ly + y * lx, leibniz=True, name="leibniz")


def check_permissible(F: PermissibleFunction, samples: int = 200, seed: int = 0) -> dict:
    """Sampled check that F is monotone and dominates the Leibniz expression."""
    rng = np.random.default_rng(seed)
    worst_gap = math.inf
    monotone = True
    for _ in range(samples):
        q = rng.uniform(0, 3, 4)
        bump = q + rng.uniform(0, 1, 4)
        if F(*bump) < F(*q) - FLOAT_SLACK:
            monotone = False
        worst_gap = min(worst_gap, F(*q) - LEIBNIZ(*q))
    return {"monotone": monotone, "dominates_leibniz": worst_gap >= -FLOAT_SLACK, "min_gap": worst_gap}


class ConstraintGroup:
    """``count`` linear maps from coordinates to ``p x q`` complex matrices, with scales."""

    count: int
    shape: tuple[int, int]
    scales: np.ndarray
    hermitian: bool = False  # images of self-adjoint coordinates are self-adjoint

    def images(self, C: np.ndarray) -> np.ndarray:
        """(R, D) coordinates -> (R, count, p, q) images."""
        raise NotImplementedError

    def pullback(self, X: np.ndarray) -> np.ndarray:
        """(R, count, p, q) matrices -> (R, count, D) real gradients of Re<X, T(c)>."""
        raise NotImplementedError

    def rows(self) -> np.ndarray | None:
        """Real row matrix when every image is a real scalar (polyhedral case)."""
        return None


class TensorGroup(ConstraintGroup):
    def __init__(self, tensor: np.ndarray, scales: Sequence[float]):
        self.tensor = np.asarray(tensor, dtype=complex)  # (count, p, q, D)
        self.count = self.tensor.shape[0]
        self.shape = self.tensor.shape[1:3]
        self.scales = np.asarray(scales, dtype=float).reshape(self.count)
        if np.any(self.scales <= 0):
            raise DomainError("constraint scales must be positive")

    def images(self, C):
        return np.einsum("kpqd,rd->rkpq", self.tensor, C)

    def pullback(self, X):
        return np.einsum("rkpq,kpqd->rkd", X.conj(), self.tensor).real

    def rows(self):
        if self.shape == (1, 1) and np.allclose(self.tensor.imag, 0.0, atol=1e-14):
            return self.tensor[:, 0, 0, :].real / self.scales[:, None]
        return None


class RowGroup(TensorGroup):
    """Real scalar constraints ``|r_i . c| / s_i``."""

    def __init__(self, rows: np.ndarray, scales: Sequence[float] | None = None):
        rows = np.asarray(rows, dtype=float)
        scales = np.ones(rows.shape[0]) if scales is None else scales
        super().__init__(rows[:, None, None, :].astype(complex), scales)
        self._rows = rows / self.scales[:, None]

    def images(self, C):
        return (C @ self._rows.T * self.scales)[:, :, None, None].astype(complex)

    def rows(self):
        return self._rows


class LSeminorm:
    """``L(a) = max_i ||T_i(a)|| / c_i`` over a finite list of linear maps.

    Constraints may be given as ``(callable, scale)`` pairs acting on
    elements (each returns a matrix or a block list) or as prebuilt
    ``ConstraintGroup`` objects. ``metric`` records the finite metric space
    when the seminorm is a Lipschitz constant.
    """

    def __init__(
        self,
        algebra: FiniteCStarAlgebra,
        constraints: Sequence = (),
        groups: Sequence[ConstraintGroup] = (),
        metric: FiniteMetricSpace | None = None,
        name: str = "L",
        check_kernel: bool = True,
    ):
        self.algebra = algebra
        self.metric = metric
        self.name = name
        self.groups: list[ConstraintGroup] = list(groups)
        if constraints:
            self.groups.extend(self._tensorize(constraints))
        if not self.groups:
            raise DomainError("a seminorm needs at least one constraint")
        self._rows_cache: np.ndarray | None | bool = False
        self._relax_cache: float | None = None
        if check_kernel:
            self.check_kernel()

    def _tensorize(self, constraints) -> list[ConstraintGroup]:
        from scipy.linalg import block_diag

        A = self.algebra
        basis = [A.basis_element(j) for j in range(A.dim)]
        by_shape: dict[tuple, tuple[list, list]] = {}
        for fn, scale in constraints:
            imgs = []
            for b in basis:
                out = fn(b)
                if isinstance(out, list):
                    out = block_diag(*out)
                imgs.append(np.atleast_2d(np.asarray(out, dtype=complex)))
            tens = np.stack(imgs, axis=-1)
            bucket = by_shape.setdefault(tens.shape[:2], ([], []))
            bucket[0].append(tens)
            bucket[1].append(float(scale))
        return [TensorGroup(np.stack(t), s) for t, s in by_shape.values()]

    @property
    def count(self) -> int:
        return sum(g.count for g in self.groups)

    # -- evaluation ------------------------------------------------------
    def eval_coords(self, C: np.ndarray) -> np.ndarray:
        C = np.atleast_2d(C)
        out = np.zeros(C.shape[0])
        rows = self.rows()
        if rows is not None:
            return np.abs(C @ rows.T).max(axis=1)
        for g in self.groups:
            for s in range(0, C.shape[0], 64):
                if hasattr(g, "norms"):
                    norms = g.norms(C[s : s + 64])
                    out[s : s + 64] = np.maximum(out[s : s + 64], (norms / g.scales[None, :]).max(axis=1))
                    continue
                imgs = g.images(C[s : s + 64])
                if g.hermitian:
                    norms = np.abs(np.linalg.eigvalsh(imgs)).max(axis=-1)
                else:
                    norms = np.linalg.norm(imgs, ord=2, axis=(-2, -1))
                out[s : s + 64] = np.maximum(out[s : s + 64], (norms / g.scales[None, :]).max(axis=1))
        return out

    def __call__(self, a) -> float:
        A = self.algebra
        if not A.is_sa(a):
            raise DomainError("seminorm is defined on self-adjoint elements")
        return float(self.eval_coords(A.coords(a))[0])

    def subgradient(self, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and one subgradient per row of ``C``."""
        C = np.atleast_2d(C)
        R = C.shape[0]
        rows = self.rows()
        if rows is not None:
            vals = C @ rows.T
            idx = np.abs(vals).argmax(axis=1)
            pick = vals[np.arange(R), idx]
            return np.abs(pick), np.sign(pick)[:, None] * rows[idx]
        best = np.full(R, -1.0)
        grad = np.zeros_like(C)
        for g in self.groups:
            imgs = g.images(C)
            u, s, vh = np.linalg.svd(imgs)
            top = s[..., 0] / g.scales[None, :]
            k = top.argmax(axis=1)
            better = top[np.arange(R), k] > best
            if not np.any(better):
                continue
            X = np.zeros_like(imgs)
            sel = np.arange(R)
            X[sel, k] = np.einsum("rp,rq->rpq", u[sel, k, :, 0], vh[sel, k, 0, :].conj())
            pulled = g.pullback(X)[sel, k] / g.scales[k][:, None]
            best = np.where(better, top[sel, k], best)
            grad = np.where(better[:, None], pulled, grad)
        return best, grad

    # -- structure -------------------------------------------------------
    def rows(self) -> np.ndarray | None:
        """Row matrix R with ``L(c) = max |R c|`` when the seminorm is polyhedral."""
        if self._rows_cache is False:
            parts = [g.rows() for g in self.groups]
            self._rows_cache = None if any(p is None for p in parts) else np.vstack(parts)
        return self._rows_cache

    @property
    def polyhedral(self) -> bool:
        return self.rows() is not None

    def gram(self) -> np.ndarray:
        """``sum_i T_i^* T_i / c_i^2`` on coordinates (Frobenius geometry)."""
        A = self.algebra
        G = np.zeros((A.dim, A.dim))
        eye = np.eye(A.dim)
        for g in self.groups:
            if hasattr(g, "gram_coords"):
                G += g.gram_coords()
                continue
            for s in range(0, A.dim, 8):
                imgs = g.images(eye[s : s + 8]) / (g.scales**2)[None, :, None, None]
                G[:, s : s + 8] += g.pullback(imgs).sum(axis=1).T
        return (G + G.T) / 2

    def complement_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the coordinate complement of the unit."""
        u = self.algebra.unit_coords / np.linalg.norm(self.algebra.unit_coords)
        q, _ = np.linalg.qr(np.column_stack([u, np.eye(self.algebra.dim)]))
        return q[:, 1 : self.algebra.dim]

    def check_kernel(self) -> None:
        """Raise DomainError unless the kernel is exactly the real multiples of the unit."""
        A = self.algebra
        if self.eval_coords(A.unit_coords)[0] > 1e-9:
            raise DomainError("seminorm does not vanish on the unit")
        if A.dim == 1:
            return
        Q = self.complement_basis()
        G = Q.T @ self.gram() @ Q
        smallest = float(np.linalg.eigvalsh(G).min())
        if smallest <= 1e-10 * max(1.0, float(np.abs(G).max())):
            raise DomainError("seminorm kernel is larger than the scalars")

    def ball_radius(self) -> float:
        """Euclidean radius (coordinates, unit removed) of the set ``{L <= 1}``.

        Uses ``||T c||_F <= sqrt(rank) ||T c||`` per constraint and the
        smallest singular value of the stacked maps on the unit's complement.
        """
        if self._relax_cache is None:
            Q = self.complement_basis()
            if Q.shape[1] == 0:
                self._relax_cache = 0.0
            else:
                G = Q.T @ self.gram() @ Q
                sigma2 = float(np.linalg.eigvalsh(G).min())
                if sigma2 <= 0:
                    raise DomainError("seminorm kernel is larger than the scalars")
                ranks = sum(g.count * min(g.shape) for g in self.groups)
                self._relax_cache = math.sqrt(ranks / sigma2)
        return self._relax_cache


def lipschitz_seminorm(space: FiniteMetricSpace) -> tuple[FiniteCStarAlgebra, LSeminorm]:
    """Lipschitz constant on ``C(X)`` as one scalar constraint per pair of points."""
    n = len(space)
    A = commutative_algebra(n, name=f"C(X{n})")
    rows, scales = [], []
    for i in range(n):
        for j in range(i + 1, n):
            r = np.zeros(n)
            r[i], r[j] = 1.0, -1.0
            rows.append(r)
            scales.append(space.dist[i, j])
    if not rows:
        rows, scales = [np.zeros(n)], [1.0]
    L = LSeminorm(A, groups=[RowGroup(np.array(rows), scales)], metric=space, name="Lip", check_kernel=n > 1)
    return A, L


def polyhedral_seminorm(algebra: FiniteCStarAlgebra, rows: np.ndarray, name: str = "L") -> LSeminorm:
    """``L(c) = max_i |rows_i . c|`` on a commutative algebra."""
    return LSeminorm(algebra, groups=[RowGroup(rows)], name=name)


def seminorm_eval(L: LSeminorm, a) -> float:
    return L(a)


def check_quasi_leibniz(
    L: LSeminorm, F: PermissibleFunction = LEIBNIZ, sample_count: int = 200, seed: int = 0, pairs=None
) -> dict:
    """Sampled quasi-Leibniz check on Jordan and Lie products."""
    A = L.algebra
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = [(A.random_sa(rng), A.random_sa(rng)) for _ in range(sample_count)]
    coords, norms = [], []
    for a, b in pairs:
        ab, ba = A.mul(a, b), A.mul(b, a)
        jordan = A.scale(A.add(ab, ba), 0.5)
        lie = A.scale(A.add(ab, ba, -1.0), 1 / 2j)
        coords += [A.coords(x) for x in (a, b, jordan, lie)]
        norms.append((A.norm(a), A.norm(b)))
    vals = L.eval_coords(np.array(coords)).reshape(-1, 4) if coords else np.zeros((0, 4))
    worst = 0.0
    violations = 0
    for (na, nb), (la, lb, lj, ll) in zip(norms, vals):
        lhs = max(lj, ll)
        rhs = F(na, nb, la, lb)
        if lhs > rhs + 1e-9:
            violations += 1
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return {"samples": len(pairs), "violations": violations, "worst_ratio": worst}


# ---------------------------------------------------------------------------
# Monge-Kantorovich distance


def _linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise PropinqError(f"linear program failed: {res.message}")
    return res


def transport_distance(space: FiniteMetricSpace, mu: np.ndarray, nu: np.ndarray) -> float:
    """Wasserstein-1 distance between two weight vectors by the coupling LP."""
    n = len(space)
    mu = np.asarray(mu, float)
    nu = np.asarray(nu, float)
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n : (i + 1) * n] = 1.0
        A_eq[n + i, i::n] = 1.0
    res = _linprog(space.dist.ravel(), A_eq=A_eq, b_eq=np.concatenate([mu, nu]), bounds=(0, None))
    return float(res.fun)


def dual_norm_lp(rows: np.ndarray, w: np.ndarray) -> float:
    """``sup{w.c : |rows c| <= 1} = min{||y||_1 : rows^T y = w}``."""
    m = rows.shape[0]
    res = _linprog(
        np.ones(2 * m), A_eq=np.hstack([rows.T, -rows.T]), b_eq=w, bounds=(0, None)
    )
    return float(res.fun)


@dataclass
class GeneralBound:
    lower: float
    upper: float
    witness: np.ndarray | None


def minimize_on_affine(
    L: LSeminorm,
    point: np.ndarray,
    directions: np.ndarray,
    restarts: int = 64,
    iterations: int = 2000,
    seed: int = 0,
    spread: float = 1.0,
    target: float | None = None,
    starts: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Projected subgradient descent of L over ``point + span(directions)``.

    Returns the best value found and its minimiser; the value is achieved,
    so it is a certified upper bound on the true minimum. With ``target``
    the descent stops as soon as some iterate reaches it. ``starts`` are
    extra initial points, projected onto the affine set.
    """
    rng = np.random.default_rng(seed)
    P = directions
    if P.shape[1] == 0:
        return float(L.eval_coords(point)[0]), point.copy()
    scale = max(np.linalg.norm(point), 1e-12)
    X = point[None, :] + spread * scale * (rng.standard_normal((restarts, P.shape[1])) @ P.T) / math.sqrt(P.shape[1])
    X[0] = point
    if starts is not None:
        S = np.atleast_2d(starts)
        X = np.vstack([point[None, :] + ((S - point[None, :]) @ P) @ P.T, X])
    vals, _ = L.subgradient(X)
    best_val = vals.copy()
    best_x = X.copy()
    step0 = 0.5 * scale
    for t in range(1, iterations + 1):
        vals, grads = L.subgradient(X)
        better = vals < best_val
        best_val = np.where(better, vals, best_val)
        best_x = np.where(better[:, None], X, best_x)
        if target is not None and best_val.min() <= target:
            break
        g = grads @ P @ P.T
        gn = np.linalg.norm(g, axis=1, keepdims=True)
        gn[gn == 0] = 1.0
        X = X - (step0 / math.sqrt(t)) * g / gn
    vals = L.eval_coords(X)
    better = vals < best_val
    best_val = np.where(better, vals, best_val)
    best_x = np.where(better[:, None], X, best_x)
    i = int(best_val.argmin())
    return float(best_val[i]), best_x[i]


def mk_general(
    L: LSeminorm, w: np.ndarray, restarts: int = 64, iterations: int = 2000, seed: int = 0
) -> GeneralBound:
    """Bracket ``sup{w.c : L(c) <= 1}`` for a coordinate difference ``w`` of two states.

    Lower end: ``1/L(c)`` for the best ``c`` on the affine set ``{w.c = 1}``
    inside the unit's complement. Upper end: ``||w|| * ball_radius(L)``.
    """
    Q = L.complement_basis()
    wq = Q.T @ w
    norm_w = float(np.linalg.norm(wq))
    if norm_w <= 1e-15:
        return GeneralBound(0.0, 0.0, None)
    upper = norm_w * L.ball_radius()
    x0 = Q @ (wq / norm_w**2)
    # directions inside the complement that keep w.c fixed
    k = Q.shape[1]
    if k > 1:
        basis, _ = np.linalg.qr(np.column_stack([wq / norm_w, np.eye(k)]))
        dirs = Q @ basis[:, 1:k]
    else:
        dirs = np.zeros((L.algebra.dim, 0))
    val, c = minimize_on_affine(L, x0, dirs, restarts, iterations, seed)
    lower = 1.0 / val if val > 0 else math.inf
    return GeneralBound(min(lower, upper), upper, c / val if val > 0 else None)


def _state_coords(s) -> np.ndarray:
    return s.coords if isinstance(s, State) else np.asarray(s, dtype=float)


def mk_distance(
    A: FiniteCStarAlgebra,
    L: LSeminorm,
    phi,
    psi,
    tol: float = 1e-6,
    method: str = "auto",
    restarts: int = 64,
    iterations: int = 2000,
    seed: int = 0,
) -> Interval:
    """Bracket the Monge-Kantorovich distance between two states.

    ``method`` is ``"transport"`` (Lipschitz seminorm of a finite metric
    space), ``"lp"`` (any polyhedral seminorm), ``"general"`` (subgradient
    lower end plus ball-relaxation upper end), or ``"auto"``.
    """
    w = _state_coords(phi) - _state_coords(psi)
    if np.linalg.norm(w) <= 1e-15:
        return Interval.exact(0.0, method="identical")
    if method == "auto":
        if L.metric is not None and A.commutative:
            method = "transport"
        elif L.polyhedral:
            method = "lp"
        else:
            method = "general"
    if method == "transport":
        if L.metric is None:
            raise DomainError("transport path needs a Lipschitz seminorm")
        val = transport_distance(L.metric, _state_coords(phi), _state_coords(psi))
        return Interval(val, val, slack={"lp": LP_SLACK}, notes={"method": "transport"})
    if method == "lp":
        rows = L.rows()
        if rows is None:
            raise DomainError("LP path needs a polyhedral seminorm")
        val = dual_norm_lp(rows, w)
        return Interval(val, val, slack={"lp": LP_SLACK}, notes={"method": "lp"})
    if method == "general":
        b = mk_general(L, w, restarts, iterations, seed)
        return Interval(
            b.lower, b.upper, True, True,
            slack={"optimizer": b.upper - b.lower},
            notes={"method": "general", "restarts": restarts, "iterations": iterations, "seed": seed},
        )
    raise DomainError(f"unknown method {method!r}")


def mk_upper_relaxed(L: LSeminorm, w: np.ndarray) -> float:
    """Certified cheap upper bound ``||P w|| * ball_radius`` for many pairs at once."""
    Q = L.complement_basis()
    return float(np.linalg.norm(Q.T @ w, axis=-1).max() * L.ball_radius()) if w.ndim > 1 else float(
        np.linalg.norm(Q.T @ w) * L.ball_radius()
    )


def dirac_diameter(L: LSeminorm) -> float:
    """Largest MK distance between Dirac states (exact, commutative algebras)."""
    A = L.algebra
    n = len(A.blocks)
    if not A.commutative:
        raise DomainError("Dirac diameter needs a commutative algebra")
    if L.metric is not None:
        return L.metric.diameter()
    rows = L.rows()
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            w = np.zeros(n)
            w[i], w[j] = 1.0, -1.0
            best = max(best, dual_norm_lp(rows, w) if rows is not None else mk_general(L, w).upper)
    return best


# ---------------------------------------------------------------------------
# nets


@dataclass
class StateNet:
    coords: np.ndarray  # (count, D)
    covering_radius: float
    certified: bool
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.coords.shape[0]


def simplex_grid(n: int, steps: int) -> np.ndarray:
    """All weight vectors on n points with entries in multiples of 1/steps."""
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(prefix + [left])
            return
        for v in range(left, -1, -1):
            rec(prefix + [v], left - v, slots - 1)

    rec([], steps, n)
    return np.array(out, dtype=float) / steps


def state_net(
    A: FiniteCStarAlgebra, L: LSeminorm, mesh: float, budget: int = 20_000, seed: int = 0, samples: int = 64
) -> StateNet:
    """Finite net of states with a covering radius in the MK metric.

    Commutative algebras get the simplex grid of step ``1/ceil(1/mesh)``; its
    covering radius ``floor(n/2) * step * diam`` is certified, since rounding
    moves at most that much mass and each unit of mass travels at most the
    Dirac diameter. Matrix algebras get vector states of seeded unit vectors
    mixed with block traces; their covering radius is a sampled estimate.
    """
    if not mesh > 0:
        raise DomainError("mesh must be positive")
    steps = max(1, math.ceil(1.0 / mesh - 1e-12))
    if A.commutative:
        n = len(A.blocks)
        size = math.comb(steps + n - 1, n - 1)
        if size > budget:
            raise ResourceError(f"simplex grid would have {size} states (budget {budget})", completed=None)
        W = simplex_grid(n, steps)
        diam = dirac_diameter(L) if n > 1 else 0.0
        radius = min(1.0, (n // 2) / steps) * diam
        return StateNet(W, radius, True, {"kind": "simplex", "steps": steps, "diameter": diam})
    rng = np.random.default_rng(seed)
    per_block = min(budget, max(4, int(math.ceil((2.0 / mesh) ** 2))))
    states = [State.tracial(A).coords]
    for bi, n in enumerate(A.blocks):
        for _ in range(per_block):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            states.append(State.vector(A, v, bi).coords)
    if len(states) > budget:
        raise ResourceError("vector-state net over budget", completed=None)
    C = np.array(states)
    radius = 0.0
    for _ in range(samples):
        dens = []
        for n in A.blocks:
            m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            dens.append(m @ m.conj().T)
        total = sum(np.trace(d).real for d in dens)
        s = State(A, [d / total for d in dens], check=False).coords
        radius = max(radius, min(mk_upper_relaxed(L, s - c) for c in C))
    return StateNet(C, radius, False, {"kind": "vector", "per_block": per_block, "samples": samples})


# ---------------------------------------------------------------------------
# morphisms and quantum isometries


@dataclass
class LinearMap:
    """A linear map between algebras given on self-adjoint coordinates."""

    source: FiniteCStarAlgebra
    target: FiniteCStarAlgebra
    matrix: np.ndarray  # (target.dim, source.dim)
    func: Callable | None = None  # element-level map, when available

    def __call__(self, a):
        if self.func is not None:
            return self.func(a)
        return self.target.element(self.matrix @ self.source.coords(a))

    def coords(self, c: np.ndarray) -> np.ndarray:
        return c @ self.matrix.T if c.ndim > 1 else self.matrix @ c

    def pull_state(self, s: np.ndarray) -> np.ndarray:
        """Coordinates of ``phi o map`` for a target state with coordinates ``s``."""
        return s @ self.matrix if s.ndim > 1 else self.matrix.T @ s

    @property
    def unital(self) -> bool:
        return np.allclose(self.matrix @ self.source.unit_coords, self.target.unit_coords, atol=1e-9)

    @classmethod
    def from_function(cls, source, target, fn) -> LinearMap:
        cols = [target.coords(fn(source.basis_element(j))) for j in range(source.dim)]
        return cls(source, target, np.column_stack(cols), fn)

    @classmethod
    def identity(cls, A: FiniteCStarAlgebra) -> LinearMap:
        return cls(A, A, np.eye(A.dim), lambda a: a)

    def compose(self, after: LinearMap) -> LinearMap:
        """``after o self``."""
        return LinearMap(self.source, after.target, after.matrix @ self.matrix)


def quotient_seminorm(
    L_D: LSeminorm,
    pi: LinearMap,
    target_coords: np.ndarray,
    restarts: int = 16,
    iterations: int = 600,
    seed: int = 0,
    good_enough: float | None = None,
    starts: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """``inf{L_D(d) : pi(d) = b}`` and a minimiser; exact by LP when L_D is polyhedral.

    ``starts`` are warm-start guesses for the descent used otherwise.
    """
    P = pi.matrix
    d0, *_ = np.linalg.lstsq(P, target_coords, rcond=None)
    if np.linalg.norm(P @ d0 - target_coords) > 1e-8 * max(1.0, np.linalg.norm(target_coords)):
        raise DomainError("target is outside the image of the map")
    _, s, vh = np.linalg.svd(P)
    rank = int((s > 1e-10 * max(1.0, s.max(initial=0.0))).sum())
    N = vh[rank:].T
    rows = L_D.rows()
    if rows is not None:
        k = N.shape[1]
        m = rows.shape[0]
        if k == 0:
            return float(np.abs(rows @ d0).max()), d0
        # min t  s.t.  -t <= rows (d0 + N z) <= t
        RN = rows @ N
        c = np.zeros(k + 1)
        c[-1] = 1.0
        A_ub = np.vstack([np.hstack([RN, -np.ones((m, 1))]), np.hstack([-RN, -np.ones((m, 1))])])
        b_ub = np.concatenate([-(rows @ d0), rows @ d0])
        res = _linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (k + 1))
        d = d0 + N @ res.x[:k]
        return float(np.abs(rows @ d).max()), d
    return minimize_on_affine(L_D, d0, N, restarts, iterations, seed, spread=0.5, target=good_enough, starts=starts)


def check_quantum_isometry(
    pi: LinearMap, L_D: LSeminorm, L_A: LSeminorm, samples: int = 20, seed: int = 0, tol: float = 1e-6
) -> dict:
    """Compare the quotient of L_D through ``pi`` with L_A on sampled elements."""
    P = pi.matrix
    if np.linalg.matrix_rank(P, tol=1e-10) < pi.target.dim:
        raise DomainError("map is not surjective")
    if not pi.unital:
        raise DomainError("map is not unital")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        b = rng.standard_normal(pi.target.dim)
        q, _ = quotient_seminorm(L_D, pi, b, seed=int(rng.integers(1 << 30)))
        la = float(L_A.eval_coords(b)[0])
        worst = max(worst, abs(q - la) / max(1.0, la))
    return {"samples": samples, "max_discrepancy": worst, "ok": worst <= tol, "exact": L_D.polyhedral}
