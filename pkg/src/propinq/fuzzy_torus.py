"""Fuzzy tori: twisted group C*-algebras of finite quotients ``Z_k^d``.

The algebra acts on ``l2(Z_k^d)`` through the unitaries
``U^n e^m = sigma(m, n) e^{m - n}``, which satisfy
``U^n U^m = sigma(n, m) U^{n+m}`` and ``(U^n)* = U^{-n}``. Elements are stored
as matrices; self-adjoint coordinates are real Fourier coordinates, so the
algebra never needs a dense basis.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResourceError
from .metric_core import FiniteMetricSpace
from .monoid_metric import LENGTHS, DualTorus, torus_length
from .qcms import ConstraintGroup, FiniteCStarAlgebra, LSeminorm, lipschitz_seminorm

MAX_DIM = 4096


# ---------------------------------------------------------------------------
# lattice, twist and sections


@dataclass(frozen=True)
class LatticeSpec:
    k: tuple[int, ...]

    def __post_init__(self):
        k = tuple(int(x) for x in self.k)
        object.__setattr__(self, "k", k)
        if len(k) < 2:
            raise DomainError("fuzzy tori need d >= 2")
        if any(x < 1 for x in k):
            raise DomainError("lattice orders must be positive")

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def size(self) -> int:
        return math.prod(self.k)

    def points(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*[range(n) for n in self.k]))


def centered_window(n: int) -> range:
    """``J_n = {floor((1-n)/2), ..., floor((n-1)/2)}``, a transversal of ``Z/nZ``."""
    return range((1 - n) // 2, (n - 1) // 2 + 1)


def section(k: Sequence[int], z: Sequence[int], kind: str = "centered") -> np.ndarray:
    """Integer representative of a lattice class: centered window or ``[0, k)``."""
    k_arr = np.asarray(k)
    r = np.mod(np.asarray(z), k_arr)
    if kind == "positive":
        return r
    if kind == "centered":
        hi = (k_arr - 1) // 2
        return np.where(r > hi, r - k_arr, r)
    raise DomainError(f"unknown section {kind!r}")


def check_theta(k: Sequence[int], theta) -> np.ndarray:
    """Validate membership of ``theta`` in the twist set for ``Z_k^d``."""
    th = np.asarray(theta, dtype=float)
    d = len(k)
    if th.shape != (d, d):
        raise DomainError(f"theta must be {d}x{d}")
    if not np.allclose(th, -th.T, atol=1e-12):
        raise DomainError("theta must be antisymmetric")
    for i in range(d):
        for j in range(d):
            v = math.gcd(int(k[i]), int(k[j])) * th[i, j]
            if abs(v - round(v)) > 1e-9:
                raise DomainError(f"gcd(k_{i}, k_{j}) * theta_{i}{j} = {v} is not an integer")
    return th


def multiplier(k: Sequence[int], theta, z, w, section_kind: str = "centered") -> complex:
    """``exp(2 pi i <theta s(z), s(w)>)`` for lattice classes z, w."""
    th = check_theta(k, theta)
    sz = section(k, z, section_kind).astype(float)
    sw = section(k, w, section_kind).astype(float)
    return complex(np.exp(2j * np.pi * (sw @ th @ sz)))


def _phase_table(k, th, a: np.ndarray, b: np.ndarray, section_kind: str = "centered") -> np.ndarray:
    """Vectorised ``sigma(a_i, b_j)`` for arrays of lattice points."""
    sa = section(k, a, section_kind).astype(float)
    sb = section(k, b, section_kind).astype(float)
    return np.exp(2j * np.pi * np.einsum("jx,xy,iy->ij", sb, th, sa))


# ---------------------------------------------------------------------------
# length functions


@dataclass(frozen=True)
class LengthFunction:
    """A length on ``T^d``: chordal sup, geodesic sup, or Hermitian, times ``scale``."""

    kind: str = "chordal"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in LENGTHS:
            raise DomainError(f"unknown length function {self.kind!r}")
        if not self.scale > 0:
            raise DomainError("length scale must be positive")

    def __call__(self, points) -> np.ndarray:
        return torus_length(np.asarray(points, dtype=complex), self.kind, self.scale)

    def check(self, d: int, samples: int = 200, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        lam = np.exp(2j * np.pi * rng.uniform(size=(samples, d)))
        mu = np.exp(2j * np.pi * rng.uniform(size=(samples, d)))
        one = np.ones((1, d), complex)
        return {
            "zero_at_one": float(self(one)[0]) == 0.0,
            "positive_off_one": bool(np.all(self(lam) > 0)),
            "symmetric": bool(np.allclose(self(lam), self(lam.conj()), atol=1e-12)),
            "subadditive": bool(np.all(self(lam * mu) <= self(lam) + self(mu) + 1e-12)),
        }

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


def as_length(length) -> LengthFunction:
    if isinstance(length, LengthFunction):
        return length
    if isinstance(length, dict):
        return LengthFunction(length.get("kind", "chordal"), float(length.get("scale", 1.0)))
    return LengthFunction(str(length))


# ---------------------------------------------------------------------------
# the algebra


class FuzzyTorus(FiniteCStarAlgebra):
    """``C*(Z_k^d, theta)`` represented on ``l2(Z_k^d)``.

    Coordinates of a self-adjoint element are real Fourier coordinates,
    orthonormal for ``Re tr(a* b)``; ``fourier`` gives the coefficients
    ``f(n) = tr(a (U^n)*) / dim``.
    """

    def __init__(self, k: Sequence[int], theta=None, verify_cap: int = 64, seed: int = 0):
        self.lattice = LatticeSpec(tuple(k))
        self.k = self.lattice.k
        d = self.lattice.d
        self.theta = check_theta(self.k, np.zeros((d, d)) if theta is None else theta)
        N = self.lattice.size
        if N > MAX_DIM:
            raise ResourceError(f"fuzzy torus dimension {N} over budget {MAX_DIM}", completed=None)
        self.N = N
        self.blocks = (N,)
        self.full = False
        self.name = f"fuzzy{self.k}"
        self.pts = np.array(self.lattice.points(), dtype=np.int64).reshape(N, d)
        self._strides = np.array([math.prod(self.k[j + 1 :]) for j in range(d)], dtype=np.int64)
        # shift[n, m] = index of m - n; phase[n, m] = sigma(m, n)
        diff = np.mod(self.pts[None, :, :] - self.pts[:, None, :], np.array(self.k))
        self._shift = diff @ self._strides
        self._phase = _phase_table(self.k, self.theta, self.pts, self.pts).T
        self._neg = np.mod(-self.pts, np.array(self.k)) @ self._strides
        self._setup_real_basis()
        self.dim = N
        self._unit_coords = self.coords(self.unit())
        self.verification = self.verify_relations(verify_cap, seed)

    # -- index helpers ---------------------------------------------------
    def index(self, n: Sequence[int]) -> int:
        return int(np.mod(np.asarray(n), np.array(self.k)) @ self._strides)

    def _setup_real_basis(self):
        # classes {n, -n} carry one real coordinate if n = -n, otherwise two;
        # to_coords maps [Re f, Im f] to coordinates, from_coords inverts it
        N = self.N
        seen = set()
        rows = []
        rN, rh = math.sqrt(N), math.sqrt(N / 2)
        for i in range(N):
            if i in seen:
                continue
            j = int(self._neg[i])
            seen.update((i, j))
            if i == j:
                r = np.zeros(2 * N)
                r[i] = rN
                rows.append(r)
            else:
                r = np.zeros(2 * N)
                r[i] = r[j] = rh
                rows.append(r)
                r = np.zeros(2 * N)
                r[N + i], r[N + j] = rh, -rh
                rows.append(r)
        self._to_coords = np.array(rows)
        # coordinates are orthonormal, so the inverse on the image is a rescaled transpose
        self._from_coords = self._to_coords.T / N

    # -- unitaries -------------------------------------------------------
    def unitary(self, n: Sequence[int]) -> np.ndarray:
        i = self.index(n)
        U = np.zeros((self.N, self.N), complex)
        U[self._shift[i], np.arange(self.N)] = self._phase[i]
        return U

    def verify_relations(self, verify_cap: int = 64, seed: int = 0, samples: int = 200) -> dict:
        """Check ``U^n U^m = sigma(n, m) U^{n+m}`` and unitarity on monomial data."""
        N = self.N
        rng = np.random.default_rng(seed)
        if N <= verify_cap:
            pairs = [(i, j) for i in range(N) for j in range(N)]
            exhaustive = True
        else:
            pairs = [tuple(rng.integers(N, size=2)) for _ in range(samples)]
            exhaustive = False
        worst = 0.0
        cols = np.arange(N)
        for i, j in pairs:
            # (U^n U^m) e^p = phase_m(p) * phase_n(p - m) e^{p - m - n}
            mid = self._shift[j, cols]
            ph = self._phase[j, cols] * self._phase[i, mid]
            dest = self._shift[i, mid]
            s = self.pts[i] + self.pts[j]
            ij = self.index(s)
            sig = complex(np.exp(2j * np.pi * (section(self.k, self.pts[j]) @ self.theta @ section(self.k, self.pts[i]))))
            if not np.array_equal(dest, self._shift[ij, cols]):
                worst = math.inf
                break
            worst = max(worst, float(np.abs(ph - sig * self._phase[ij, cols]).max()))
        unit_dev = float(np.abs(np.abs(self._phase) - 1).max())
        if worst > 1e-9 or unit_dev > 1e-12:
            raise DomainError(f"twisted relations fail (deviation {worst}, unitarity {unit_dev})")
        return {"pairs": len(pairs), "exhaustive": exhaustive, "max_deviation": worst}

    # -- Fourier coordinates ----------------------------------------------
    def fourier(self, a) -> np.ndarray:
        """``f(n) = tr(a (U^n)*) / N`` for every lattice point n (canonical order)."""
        return self.fourier_batch(self._as_element(a)[0])

    def fourier_batch(self, Y: np.ndarray) -> np.ndarray:
        """Fourier coefficients of a stack ``(..., N, N)`` of matrices."""
        cols = np.arange(self.N)
        return (np.conj(self._phase) * Y[..., self._shift, cols[None, :]]).sum(axis=-1) / self.N

    def from_fourier(self, f: np.ndarray) -> np.ndarray:
        """``sum_n f(n) U^n`` for a stack ``(..., N)`` of coefficient vectors."""
        f = np.asarray(f, dtype=complex)
        out = np.zeros(f.shape[:-1] + (self.N, self.N), complex)
        cols = np.broadcast_to(np.arange(self.N), (self.N, self.N))
        out[..., self._shift, cols] = f[..., :, None] * self._phase
        return out

    def _coords_from_fourier(self, F: np.ndarray) -> np.ndarray:
        return np.concatenate([F.real, F.imag], axis=-1) @ self._to_coords.T

    def fourier_from_coords(self, c: np.ndarray) -> np.ndarray:
        v = np.asarray(c, float) @ self._from_coords.T
        return v[..., : self.N] + 1j * v[..., self.N :]

    def coords(self, a) -> np.ndarray:
        return self._coords_from_fourier(self.fourier(a))

    def pair(self, y) -> np.ndarray:
        return self._coords_from_fourier(self.fourier(y))

    def pair_batch(self, Y: np.ndarray) -> np.ndarray:
        return self._coords_from_fourier(self.fourier_batch(Y))

    def element(self, c: np.ndarray) -> list:
        return [self.from_fourier(self.fourier_from_coords(c))]

    def element_vec(self, c):
        from .qcms import _vec

        return _vec(self.element(c))

    def elements_batch(self, C: np.ndarray) -> np.ndarray:
        """(R, D) coordinates -> (R, N, N) matrices."""
        return self.from_fourier(self.fourier_from_coords(np.atleast_2d(C)))

    # -- dual group and action ------------------------------------------
    def dual_group(self, length="chordal") -> DualTorus:
        ell = as_length(length)
        return DualTorus(self.k, ell.kind, ell.scale)

    def characters(self, lam: Sequence[int]) -> np.ndarray:
        """``lambda^n`` for every lattice point n, with lambda given by exponents."""
        lam = _check_dual(self.k, lam)
        return np.exp(2j * np.pi * (self.pts @ (np.asarray(lam) / np.array(self.k))))

    def implementing_unitary(self, lam: Sequence[int]) -> np.ndarray:
        """Diagonal of ``u_lambda``: ``u e^n = lambda^{-n} e^n``."""
        return np.conj(self.characters(lam))

    def torus_point(self, lam: Sequence[int]) -> np.ndarray:
        return np.exp(2j * np.pi * np.asarray(lam, float) / np.array(self.k, float))


    # -- block structure ---------------------------------------------------
    def irreducible_blocks(self) -> np.ndarray | None:
        """Images of every ``U^n`` in one copy of each inequivalent irreducible block.

        Returns an array ``(N, blocks, q, q)`` such that the norm of any
        element is the largest norm of its blocks, or None if the
        decomposition could not be verified (callers then use dense
        matrices). Computed once: eigenspaces of a generic self-adjoint
        element of the commutant (twisted right shifts) carry one
        irreducible summand each.
        """
        if not hasattr(self, "_irreps"):
            self._irreps = self._decompose()
        return self._irreps

    def _right_shift(self, i: int) -> np.ndarray | None:
        # V e^m = c(m) e^{m - e_i}, with c fixed by commuting with every generator
        N, d = self.N, self.lattice.d
        gens = [self.index(tuple(int(a == j) for a in range(d))) for j in range(d)]
        gi = gens[i]
        c = np.full(N, np.nan, complex)
        c[0] = 1.0
        stack = [0]
        while stack:
            m = stack.pop()
            for gj in gens:
                nxt = int(self._shift[gj, m])  # m - e_j
                val = c[m] * self._phase[gj, self._shift[gi, m]] / self._phase[gj, m]
                if np.isnan(c[nxt]):
                    c[nxt] = val
                    stack.append(nxt)
        V = np.zeros((N, N), complex)
        V[self._shift[gi], np.arange(N)] = c
        for gj in gens:
            U = self.unitary(self.pts[gj])
            if np.abs(V @ U - U @ V).max() > 1e-10:
                return None
        return V

    def _decompose(self) -> np.ndarray | None:
        N, d = self.N, self.lattice.d
        shifts = [self._right_shift(i) for i in range(d)]
        if any(V is None for V in shifts):
            return None
        rng = np.random.default_rng(12345)
        X = np.zeros((N, N), complex)
        for n in self.pts:
            W = np.eye(N, dtype=complex)
            for V, e in zip(shifts, n):
                W = W @ np.linalg.matrix_power(V, int(e))
            X += (rng.standard_normal() + 1j * rng.standard_normal()) * W
        vals, vecs = np.linalg.eigh(X + X.conj().T)
        cuts = [0] + [i + 1 for i in range(N - 1) if vals[i + 1] - vals[i] > 1e-7 * max(1.0, abs(vals).max())] + [N]
        sizes = {b - a for a, b in zip(cuts, cuts[1:])}
        if len(sizes) != 1:
            return None
        q = sizes.pop()
        nb = N // q
        blocks = np.zeros((N, nb, q, q), complex)
        for idx in range(N):
            M = vecs.conj().T @ self.unitary(self.pts[idx]) @ vecs
            for b in range(nb):
                sl = slice(b * q, (b + 1) * q)
                blocks[idx, b] = M[sl, sl]
                M[sl, sl] = 0.0
            if np.abs(M).max() > 1e-9:
                return None
        # equivalent blocks have equal characters; keep one of each
        chars = np.round(np.trace(blocks, axis1=2, axis2=3).T, 8) + 0.0
        keep, seen = [], set()
        for b in range(nb):
            key = chars[b].tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(b)
        return blocks[:, keep]


def _check_dual(k, lam) -> tuple[int, ...]:
    arr = np.asarray(lam)
    if np.iscomplexobj(arr):
        if arr.shape != (len(k),) or np.any(np.abs(arr ** np.array(k) - 1) > 1e-12):
            raise DomainError("dual element must be a tuple of k_j-th roots of unity")
        ex = np.round(np.angle(arr) / (2 * np.pi) * np.array(k)).astype(int)
        return tuple(int(x) for x in np.mod(ex, k))
    if arr.shape != (len(k),) or not np.all(np.equal(np.mod(arr, 1), 0)):
        raise DomainError("dual element must list one integer exponent per coordinate")
    return tuple(int(x) for x in np.mod(arr.astype(int), k))


def build_algebra(k: Sequence[int], theta=None, verify_cap: int = 64) -> FuzzyTorus:
    return FuzzyTorus(k, theta, verify_cap)


def dual_action(A: FuzzyTorus, lam, a, check: bool = True) -> list:
    """``alpha^lambda(a)``: Fourier coefficients scaled by ``lambda^n``.

    With ``check`` the result is recomputed as ``u a u*`` and both must agree
    to 1e-9.
    """
    lam = _check_dual(A.k, lam)
    f = A.fourier(a)
    out = A.from_fourier(A.characters(lam) * f)
    if check:
        u = A.implementing_unitary(lam)
        mat = A._as_element(a)[0]
        other = (u[:, None] * mat) * np.conj(u)[None, :]
        if np.abs(out - other).max() > 1e-9 * max(1.0, np.abs(mat).max()):
            raise DomainError("Fourier and Ad-u dual actions disagree")
    return [out]


class FuzzyLipGroup(ConstraintGroup):
    """Constraints ``a - alpha^lambda(a)`` with scales ``l(lambda)`` for every ``lambda != 1``."""

    def __init__(self, A: FuzzyTorus, ell: LengthFunction):
        self.A = A
        G = A.dual_group(ell)
        lams = [g for g in G.elements() if g != G.identity]
        self.lams = lams
        self.count = len(lams)
        self.shape = (A.N, A.N)
        self.hermitian = True
        self.scales = np.array([float(ell(A.torus_point(l)[None, :])[0]) for l in lams])
        if np.any(self.scales <= 0):
            raise DomainError("length function vanishes away from 1")
        # entrywise weights: (a - u a u*)_{ij} = (1 - u_i conj(u_j)) a_ij
        U = np.array([A.implementing_unitary(l) for l in lams])
        self.weights = 1.0 - U[:, :, None] * np.conj(U)[:, None, :]

        self._chars = np.array([A.characters(l) for l in lams])  # (count, N)

    def images(self, C):
        M = self.A.elements_batch(C)
        return M[:, None, :, :] * self.weights[None, :, :, :]

    def norms(self, C) -> np.ndarray:
        """``||a - alpha^lambda(a)||`` for each row of C and each lambda, via irreducible blocks."""
        B = self.A.irreducible_blocks()
        if B is None:
            return np.abs(np.linalg.eigvalsh(self.images(C))).max(axis=-1)
        F = self.A.fourier_from_coords(np.atleast_2d(C))  # (R, N)
        G = F[:, None, :] * (1.0 - self._chars)[None]  # (R, count, N)
        R, count, N = G.shape
        nb, q = B.shape[1], B.shape[2]
        M = (G.reshape(R * count, N) @ B.reshape(N, nb * q * q)).reshape(R, count, nb, q, q)
        if q == 1:
            return np.abs(M[..., 0, 0]).max(axis=-1)
        return np.abs(np.linalg.eigvalsh(M)).max(axis=(-2, -1))

    def pullback(self, X):
        return self.A.pair_batch(X * np.conj(self.weights)[None])

    def gram_coords(self) -> np.ndarray:
        """Diagonal Gram matrix: every coordinate lives on one frequency class ``{n, -n}``."""
        A = self.A
        T = np.abs(A._to_coords)
        freq = (T[:, : A.N] + T[:, A.N :]).argmax(axis=1)
        chars = np.array([A.characters(l) for l in self.lams])  # (count, N)
        w = (np.abs(1.0 - chars) ** 2 / self.scales[:, None] ** 2).sum(axis=0)
        return np.diag(w[freq])


def lip_norm(A: FuzzyTorus, length="chordal") -> LSeminorm:
    """``L(a) = max_{lambda != 1} ||a - alpha^lambda(a)|| / l(lambda)``."""
    ell = as_length(length)
    L = LSeminorm(A, groups=[FuzzyLipGroup(A, ell)], name=f"L[{ell.kind}]")
    L.length = ell
    return L


def fourier_lip_values(A: FuzzyTorus, L: LSeminorm, a) -> float:
    """Direct evaluation of the Lip-norm from the matrix of ``a``."""
    ell = L.length
    G = A.dual_group(ell)
    mat = A._as_element(a)[0]
    best = 0.0
    for lam in G.elements():
        if lam == G.identity:
            continue
        moved = dual_action(A, lam, [mat], check=False)[0]
        best = max(best, float(np.linalg.norm(mat - moved, 2)) / float(ell(A.torus_point(lam)[None, :])[0]))
    return best


def commutative_model(k: Sequence[int], length="chordal"):
    """``C(U_k^d)`` with the Lipschitz seminorm of ``d(mu, nu) = l(mu^{-1} nu)``.

    For ``theta = 0`` this is isomorphic to the fuzzy torus with its Lip-norm
    through ``a -> (mu -> sum_n f(n) mu^n)``; the dual action becomes
    translation. Points are listed in the lattice order.
    """
    ell = as_length(length)
    G = DualTorus(k, ell.kind, ell.scale)
    pts = G.elements()
    space = FiniteMetricSpace(pts, G.dist_matrix(pts, pts))
    algebra, L = lipschitz_seminorm(space)
    return algebra, L, G


def gelfand_transform(A: FuzzyTorus, a) -> np.ndarray:
    """Values ``sum_n f(n) mu^n`` at every ``mu`` of the dual group (theta = 0)."""
    if np.any(A.theta != 0):
        raise DomainError("Gelfand transform needs theta = 0")
    f = A.fourier(a)
    chars = np.exp(2j * np.pi * (A.pts / np.array(A.k)) @ A.pts.T)  # chars[mu, n] = mu^n
    return chars @ f


def trace_radius_bound(k: Sequence[int], length="chordal") -> float:
    """Average of ``l`` over ``U_k^d``: bounds ``MK(phi, trace)`` for every state.

    Averaging ``phi o alpha^lambda`` over the dual group gives the trace, and
    ``|phi(a) - phi(alpha^lambda a)| <= l(lambda) L(a)``.
    """
    ell = as_length(length)
    G = DualTorus(k, ell.kind, ell.scale)
    pts = np.array([G.torus_point(g) for g in G.elements()])
    return float(ell(pts).mean())
