"""Bridges between represented algebras and the tunnels they induce.

A bridge places two algebras in one ambient matrix algebra and compares them
through a pivot ``x``: ``bn(a, b) = ||pi_A(a) x - x pi_B(b)||``. Finite fuzzy
tori are represented on ``l2(Z_K^d)``, ``K = lcm(k, k')``, as block copies of
their regular representations, so both dual actions are implemented by the
same diagonal unitaries and commute with a diagonal pivot.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import DomainError, PropinqError, ResourceError
from .fuzzy_torus import FuzzyTorus, as_length, centered_window, lip_norm, section
from .interval import Interval
from .monoid_metric import MapPair, check_almost_iso
from .qcms import ConstraintGroup, FiniteCStarAlgebra, LinearMap, LSeminorm
from .tunnels import (
    CovariantTunnel,
    DiagonalBound,
    HubBound,
    LipschitzDynamicalSystem,
    Tunnel,
    dilation,
    direct_sum,
    hub_radius,
    lift_seminorm_groups,
    magnitude,
)

MAX_AMBIENT = 1024

# ---------------------------------------------------------------------------
# embeddings


class Embedding:
    """A unital injective *-homomorphism of a one-block algebra into ``M_n``."""

    algebra: FiniteCStarAlgebra
    dim: int

    def ambient(self, C: np.ndarray) -> np.ndarray:
        """(R, D) coordinates -> (R, n, n) ambient matrices."""
        raise NotImplementedError

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        """(R, n, n) -> (R, D): gradient of ``Re tr(Z* pi(a))`` in coordinates."""
        raise NotImplementedError

    def unitary(self, g) -> np.ndarray | None:
        """Diagonal of an ambient unitary implementing the action of ``g``, when one exists."""
        return None

    def check(self, samples: int = 5, seed: int = 0, tol: float = 1e-9) -> dict:
        A = self.algebra
        rng = np.random.default_rng(seed)
        unit = self.ambient(A.unit_coords[None])[0]
        unital = bool(np.abs(unit - np.eye(self.dim)).max() <= tol)
        worst = 0.0
        for _ in range(samples):
            a, b = A.random_sa(rng), A.random_sa(rng)
            ab = A.mul(a, b)
            pa, pb = self.ambient(np.array([A.coords(a), A.coords(b)]))
            # coordinates only see the self-adjoint part, so compare Hermitian parts
            lhs = (pa @ pb + pb @ pa) / 2
            rhs = self.ambient(A.coords(A.scale(A.add(ab, A.mul(b, a)), 0.5))[None])[0]
            worst = max(worst, float(np.abs(lhs - rhs).max()))
        return {"unital": unital, "multiplicative_deviation": worst, "ok": unital and worst <= tol}


class IdentityEmbedding(Embedding):
    """A one-block algebra acting on its own space."""

    def __init__(self, algebra: FiniteCStarAlgebra):
        if len(algebra.blocks) != 1:
            raise DomainError("identity embedding needs a one-block algebra")
        self.algebra = algebra
        self.dim = algebra.blocks[0]

    def ambient(self, C):
        A = self.algebra
        if isinstance(A, FuzzyTorus):
            return A.elements_batch(C)
        return np.array([A.element(c)[0] for c in np.atleast_2d(C)])

    def adjoint(self, Z):
        A = self.algebra
        if isinstance(A, FuzzyTorus):
            return A.pair_batch(Z)
        return np.array([A.pair([z]) for z in Z])

    def unitary(self, g):
        if isinstance(self.algebra, FuzzyTorus):
            return self.algebra.implementing_unitary(g)
        return None


class BlockEmbedding(Embedding):
    """``pi_{k,theta}(a) = sum_m y_m* rho(a) y_m`` on ``l2(Z_K^d)``.

    Blocks are the translates ``m + J_k`` for ``m`` in ``k Z^d / K Z^d``;
    ``y_m`` sends ``e^{m + j}`` to ``e_k^j``. Ambient basis vectors are listed
    in the lattice order of ``Z_K^d``.
    """

    def __init__(self, torus: FuzzyTorus, K: Sequence[int]):
        K = tuple(int(x) for x in K)
        if len(K) != len(torus.k) or any(Kj % kj for Kj, kj in zip(K, torus.k)):
            raise DomainError("ambient orders must be multiples of the torus orders")
        M = math.prod(K)
        if M > MAX_AMBIENT:
            raise ResourceError(f"ambient dimension {M} over budget {MAX_AMBIENT}", completed=None)
        self.algebra = torus
        self.K = K
        self.dim = M
        pts = np.array(list(np.ndindex(*K)), dtype=np.int64).reshape(M, len(K))
        self.points = section(K, pts)  # centered representatives
        k = np.array(torus.k)
        local = section(k, self.points)  # j in J_k with p = m + j
        offset = np.mod(self.points - local, np.array(K)) // k
        self.local = np.array([torus.index(j) for j in local])
        blocks: dict[tuple, list[int]] = {}
        for p, m in enumerate(map(tuple, offset)):
            blocks.setdefault(m, []).append(p)
        # each block listed in the torus's lattice order
        self.blocks = []
        for idx in blocks.values():
            idx = np.array(idx)
            order = np.argsort(self.local[idx])
            self.blocks.append(idx[order])
        self.block_of = np.empty(M, dtype=np.int64)
        for b, idx in enumerate(self.blocks):
            self.block_of[idx] = b

    def isometry(self, b: int) -> np.ndarray:
        """``y_m`` for the ``b``-th block as an ``N x M`` matrix."""
        Y = np.zeros((self.algebra.N, self.dim))
        Y[np.arange(self.algebra.N), self.blocks[b]] = 1.0
        return Y

    def embed(self, Y: np.ndarray) -> np.ndarray:
        out = np.zeros(Y.shape[:-2] + (self.dim, self.dim), complex)
        for idx in self.blocks:
            out[..., idx[:, None], idx[None, :]] = Y
        return out

    def compress(self, Z: np.ndarray) -> np.ndarray:
        return sum(Z[..., idx[:, None], idx[None, :]] for idx in self.blocks)

    def ambient(self, C):
        return self.embed(self.algebra.elements_batch(np.atleast_2d(C)))

    def adjoint(self, Z):
        return self.algebra.pair_batch(self.compress(Z))

    def unitary(self, g):
        """``u e^p = lambda^{-p} e^p``; agrees with the torus's unitary on every block."""
        lam = np.asarray(g, dtype=float) / np.array(self.algebra.k)
        return np.exp(-2j * np.pi * (self.points @ lam))


# ---------------------------------------------------------------------------
# bridges


@dataclass
class Bridge:
    """Two embeddings into one ambient ``M_n`` and a pivot ``x``."""

    emb_a: Embedding
    emb_b: Embedding
    pivot: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.emb_a.dim
        if self.emb_b.dim != n or self.pivot.shape != (n, n):
            raise DomainError("embeddings and pivot must share one ambient space")
        self.pivot = np.asarray(self.pivot, dtype=complex)
        self._s1 = self.s1_vectors()

    @property
    def algebras(self) -> tuple[FiniteCStarAlgebra, FiniteCStarAlgebra]:
        return self.emb_a.algebra, self.emb_b.algebra

    def s1_vectors(self, tol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis (columns) of ``{v : x v = v = x* v}``.

        Vector states on this space satisfy ``phi(a x) = phi(x a) = phi(a)``.
        """
        n = self.pivot.shape[0]
        eye = np.eye(n)
        stacked = np.vstack([self.pivot - eye, self.pivot.conj().T - eye])
        _, s, vh = np.linalg.svd(stacked)
        null = vh[(s > tol).sum():].conj().T
        if null.shape[1] == 0:
            raise DomainError("pivot has no eigenvalue-1 vectors; the level-1 state set may be empty")
        return null

    def hub_states(self) -> tuple[np.ndarray, np.ndarray]:
        """Leg coordinates of the vector state of the first eigenvalue-1 vector."""
        v = self._s1[:, 0]
        P = np.outer(v, v.conj())[None]
        return self.emb_a.adjoint(P)[0], self.emb_b.adjoint(P)[0]

    def norm(self, a, b) -> float:
        return bridge_norm(self, a, b)


def bridge_norm(bridge: Bridge, a, b) -> float:
    """``||pi_A(a) x - x pi_B(b)||`` as an exact operator norm."""
    A, B = bridge.algebras
    ca = a if isinstance(a, np.ndarray) and a.ndim == 1 else A.coords(a)
    cb = b if isinstance(b, np.ndarray) and b.ndim == 1 else B.coords(b)
    pa = bridge.emb_a.ambient(ca[None])[0]
    pb = bridge.emb_b.ambient(cb[None])[0]
    x = bridge.pivot
    return float(np.linalg.norm(pa @ x - x @ pb, 2))


@dataclass
class CovariantBridge:
    """A bridge between two systems together with maps between their monoids."""

    bridge: Bridge
    systems: tuple[LipschitzDynamicalSystem, LipschitzDynamicalSystem]
    maps: MapPair
    pairing: LinearMap | None = None
    pairing_back: LinearMap | None = None

    def __post_init__(self):
        A, B = self.bridge.algebras
        if self.systems[0].algebra is not A or self.systems[1].algebra is not B:
            raise DomainError("systems do not match the bridge legs")
        G, H = self.systems[0].monoid, self.systems[1].monoid
        if not self.maps.is_unital(G, H):
            raise DomainError("monoid maps must send the identity to the identity")
        if self.pairing is None:
            self.pairing = default_pairing(A, B)
        if self.pairing_back is None:
            self.pairing_back = default_pairing(B, A)

    def group_pairs(self, j: int, radius: float | None = None) -> list[tuple]:
        """Pairs ``(g, map(g))`` over the whole finite monoid, or its ``radius`` ball otherwise."""
        sysj = self.systems[j]
        mapping = self.maps.forward if j == 0 else self.maps.backward
        if sysj.monoid.finite:
            elems = sysj.monoid.elements()
        elif radius is not None:
            elems = sysj.monoid.ball(radius)
        else:
            raise DomainError("infinite monoid needs a ball radius")
        missing = [g for g in elems if g not in mapping]
        if missing:
            raise DomainError(f"monoid map undefined at {missing[0]!r}")
        return [(g, mapping[g]) for g in elems]


def default_pairing(A: FiniteCStarAlgebra, B: FiniteCStarAlgebra) -> LinearMap:
    """Identity for equal algebras; Fourier matching on the common window for fuzzy tori."""
    if A is B:
        return LinearMap.identity(A)
    if isinstance(A, FuzzyTorus) and isinstance(B, FuzzyTorus):
        return fourier_pairing(A, B)
    raise DomainError("no default pairing between these algebras")


def _window_match(A: FuzzyTorus, B: FuzzyTorus) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(n in A, n in B)`` of frequencies whose centered representative lies in both windows."""
    rep = section(A.k, A.pts)
    inside = np.all([(rep[:, j] >= centered_window(B.k[j]).start) & (rep[:, j] < centered_window(B.k[j]).stop)
                     for j in range(len(A.k))], axis=0)
    src = np.nonzero(inside)[0]
    dst = np.array([B.index(rep[i]) for i in src], dtype=np.int64)
    return src, dst


def fourier_pairing(A: FuzzyTorus, B: FuzzyTorus) -> LinearMap:
    """``Phi(a) = Re-part of sum_{n in window} f(n) V^n``; unital, self-adjoint preserving."""
    if len(A.k) != len(B.k):
        raise DomainError("fuzzy tori of different dimensions")
    src, dst = _window_match(A, B)
    F = A.fourier_from_coords(np.eye(A.dim))  # (D_A, N_A)
    G = np.zeros((A.dim, B.N), complex)
    G[:, dst] = F[:, src]
    Y = B.from_fourier(G)
    Y = (Y + np.conj(np.swapaxes(Y, -1, -2))) / 2
    return LinearMap(A, B, B.pair_batch(Y).T)


def _pairing_on_monomials(A: FuzzyTorus, B: FuzzyTorus, n_idx: np.ndarray) -> np.ndarray:
    """Complex-linear extension of the pairing on ``U^n``: ``(Psi(U^n) + Psi(U^n*)*) / 2``."""
    src, dst = _window_match(A, B)
    lookup = -np.ones(A.N, dtype=np.int64)
    lookup[src] = dst
    out = np.zeros((len(n_idx), B.N, B.N), complex)
    for r, i in enumerate(n_idx):
        Un = A.unitary(A.pts[i])
        f_star = A.fourier_batch(Un.conj().T)
        g1 = np.zeros(B.N, complex)
        g2 = np.zeros(B.N, complex)
        if lookup[i] >= 0:
            g1[lookup[i]] = 1.0
        keep = lookup >= 0
        g2[lookup[keep]] = f_star[keep]
        Y1 = B.from_fourier(g1)
        Y2 = B.from_fourier(g2)
        out[r] = (Y1 + Y2.conj().T) / 2
    return out


# ---------------------------------------------------------------------------
# the bridge seminorm


class BridgeGroup(ConstraintGroup):
    """Constraints ``pi_A(alpha^g a) x - x pi_B(beta^h b)`` on ``A + B`` coordinates.

    Each term is ``(Ma, Mb, w)``: coordinate matrices of the two actions
    (``None`` for identity) and an optional diagonal ``w`` with the term
    replaced by the unitarily equivalent ``pi_A(a) x - x Ad(w) pi_B(b)``.
    """

    def __init__(self, bridge: Bridge, terms: list[tuple], scale: float):
        if not scale > 0:
            raise DomainError("bridge scale must be positive")
        self.bridge = bridge
        self.terms = terms
        self.count = len(terms)
        n = bridge.pivot.shape[0]
        self.shape = (n, n)
        self.scales = np.full(self.count, float(scale))
        self._da = bridge.emb_a.algebra.dim

    def images(self, C):
        C = np.atleast_2d(C)
        ca, cb = C[:, : self._da], C[:, self._da :]
        x = self.bridge.pivot
        out = np.empty((C.shape[0], self.count) + self.shape, complex)
        for t, (Ma, Mb, w) in enumerate(self.terms):
            pa = self.bridge.emb_a.ambient(ca if Ma is None else ca @ Ma.T)
            pb = self.bridge.emb_b.ambient(cb if Mb is None else cb @ Mb.T)
            if w is not None:
                pb = w[:, None] * pb * np.conj(w)[None, :]
            out[:, t] = pa @ x - x @ pb
        return out

    def pullback(self, X):
        x = self.bridge.pivot
        R = X.shape[0]
        out = np.empty((R, self.count, self._da + self.bridge.emb_b.algebra.dim))
        for t, (Ma, Mb, w) in enumerate(self.terms):
            Xt = X[:, t]
            ga = self.bridge.emb_a.adjoint(Xt @ x.conj().T)
            Zb = x.conj().T @ Xt
            if w is not None:
                Zb = np.conj(w)[:, None] * Zb * w[None, :]
            gb = -self.bridge.emb_b.adjoint(Zb)
            out[:, t, : self._da] = ga if Ma is None else ga @ Ma
            out[:, t, self._da :] = gb if Mb is None else gb @ Mb
        return out


def bridge_terms(cb: CovariantBridge, radius: float | None = None) -> list[tuple]:
    """One constraint per group element in both orientations, merged when unitarily equivalent."""
    br = cb.bridge
    sa, sb = cb.systems
    terms: list[tuple] = []
    seen: set = set()
    implemented = br.emb_a.unitary(sa.monoid.identity) is not None and br.emb_b.unitary(sb.monoid.identity) is not None
    for j in (0, 1):
        for g, h in cb.group_pairs(j, radius):
            ga, hb = (g, h) if j == 0 else (h, g)
            if implemented:
                w = np.conj(br.emb_a.unitary(ga)) * br.emb_b.unitary(hb)
                key = (np.round(w, 9) + 0.0).tobytes()
                if key in seen:
                    continue
                seen.add(key)
                terms.append((None, None, None if np.allclose(w, 1.0) else w))
            else:
                key = (ga, hb)
                if key in seen:
                    continue
                seen.add(key)
                terms.append((sa.act(ga).matrix, sb.act(hb).matrix, None))
    return terms


# ---------------------------------------------------------------------------
# height, reach, length


def bridge_height(bridge: Bridge, L_A: LSeminorm, L_B: LSeminorm, mesh: float = 0.25, seed: int = 0) -> Interval:
    """``max_j Haus(S(A_j), level-1 states pulled back)``.

    The upper end is the MK radius of the state space about one level-1
    state; with a one-dimensional eigenvalue-1 space that state is the whole
    pulled-back set and the bracket is as sharp as the radius computation.
    """
    if bridge._s1.shape[1] == bridge.pivot.shape[0]:
        # x = 1: level-1 states are all ambient states, and every leg state extends
        return Interval(0.0, 0.0, notes={"s1_dim": int(bridge._s1.shape[1])})
    hubs = bridge.hub_states()
    radii = []
    for L, h in zip((L_A, L_B), hubs):
        system = LipschitzDynamicalSystem.static(L.algebra, L)
        r = hub_radius(system, h, mesh, seed)
        if bridge._s1.shape[1] > 1:
            r = Interval(0.0, r.upper, True, r.upper_certified, r.slack, r.notes)
        radii.append(r)
    out = radii[0].hull_max(radii[1])
    return Interval(out.lower, out.upper, out.lower_certified, out.upper_certified, out.slack,
                    {"s1_dim": int(bridge._s1.shape[1])})


def coefficient_envelope(k: Sequence[int], theta=None, length="chordal") -> np.ndarray:
    """``c_n = min_{lambda != 1} l(lambda) / |1 - lambda^n|`` over the lattice (``inf`` at ``n = 0``).

    ``L(a) <= 1`` forces ``|f(n)| <= c_n``: the coefficient of ``a - alpha^lambda(a)``
    at ``n`` is ``(1 - lambda^n) f(n)`` and coefficients are bounded by the norm.
    The twist does not enter.
    """
    ell = as_length(length)
    k = tuple(int(x) for x in k)
    pts = np.array(list(np.ndindex(*k)), dtype=float).reshape(-1, len(k))
    roots = np.exp(2j * np.pi * pts / np.array(k, dtype=float))
    ells = ell(roots)
    phase = np.exp(2j * np.pi * (pts / np.array(k)) @ pts.T)  # phase[lam, n] = lam^n
    gap = np.abs(1.0 - phase)
    with np.errstate(divide="ignore"):
        ratio = np.where(gap > 1e-12, ells[:, None] / np.where(gap > 1e-12, gap, 1.0), np.inf)
    ratio[0] = np.inf  # lambda = 1
    return ratio.min(axis=0)


def group_term_bound(k: Sequence[int], N: int, R: float) -> float:
    """``2 R sqrt(d) max_j 2|sin(N pi / k_j)|``."""
    k = tuple(int(x) for x in k)
    if N < 0 or R < 0:
        raise DomainError("cutoff and radius must be nonnegative")
    if min(k) < 2 * N:
        raise DomainError(f"cutoff {N} needs every k_j >= {2 * N}")
    return 2.0 * R * math.sqrt(len(k)) * max(2.0 * abs(math.sin(N * math.pi / kj)) for kj in k)


def _frequency_terms(cb: CovariantBridge, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Envelope weights, bn norms per (group class, frequency) and pairing norms for orientation ``j``."""
    br = cb.bridge
    emb = (br.emb_a, br.emb_b)
    src_alg = emb[j].algebra
    dst_alg = emb[1 - j].algebra
    L = cb.systems[j].seminorm
    if not (isinstance(src_alg, FuzzyTorus) and isinstance(dst_alg, FuzzyTorus) and getattr(L, "length", None)):
        return None
    env = coefficient_envelope(src_alg.k, src_alg.theta, L.length)
    freqs = np.array([i for i in range(src_alg.N) if np.isfinite(env[i])])
    other = _pairing_on_monomials(src_alg, dst_alg, freqs)
    nz = np.array([bool(np.any(o)) for o in other])
    own = np.array([src_alg.unitary(src_alg.pts[i]) for i in freqs[nz]])
    p_own = emb[j].embed(own) if isinstance(emb[j], BlockEmbedding) else own
    p_other = emb[1 - j].embed(other[nz]) if isinstance(emb[1 - j], BlockEmbedding) else other[nz]
    x = br.pivot
    classes: dict[bytes, np.ndarray] = {}
    for g, h in cb.group_pairs(j):
        u_own = emb[j].unitary(g)
        u_other = emb[1 - j].unitary(h)
        if u_own is None or u_other is None:
            return None
        w = np.conj(u_own) * u_other
        classes.setdefault((np.round(w, 9) + 0.0).tobytes(), w)
    # pairing kills the frequency: bn reduces to ||pi(U^n) x|| = ||x||
    xnorm = float(np.linalg.norm(x, 2))
    norms = np.full((len(classes), len(freqs)), xnorm)
    for ci, w in enumerate(classes.values()):
        moved = w[None, :, None] * p_other * np.conj(w)[None, None, :]
        D = p_own @ x - x @ moved if j == 0 else moved @ x - x @ p_own
        norms[ci, nz] = np.linalg.norm(D, 2, axis=(-2, -1))
    pair_norms = np.array([float(np.linalg.norm(o, 2)) for o in other]) * xnorm
    return env[freqs], norms, pair_norms


def cov_bridge_reach(cb: CovariantBridge, samples: int = 0, seed: int = 0) -> Interval:
    """Bracket ``max over orientations of sup_a inf_b sup_g bn(alpha^g a, beta^{s(g)} b)``.

    Upper end: choose ``b = mu(a) + Phi(a - mu(a)) / max(1, dil(Phi))``. For
    fuzzy legs the envelope gives ``sum_n c_n sup_g ||...||`` per frequency,
    with the rescaling costing ``(1 - 1/dil) sum_n c_n ||x Phi(U^n)||``. Other
    legs use the Frobenius relaxation over the unit ball. The lower end is 0;
    ``samples`` random elements record exact values with ``b = Phi(a)`` in the
    notes.
    """
    parts = []
    notes: dict = {}
    for j in (0, 1):
        pairing = cb.pairing if j == 0 else cb.pairing_back
        L_src, L_dst = cb.systems[j].seminorm, cb.systems[1 - j].seminorm
        dil = _pairing_dilation(pairing, L_src, L_dst)
        shrink = 1.0 - 1.0 / max(1.0, dil.upper)
        ft = _frequency_terms(cb, j)
        if ft is not None:
            env, norms, pair_norms = ft
            main = float((norms * env[None, :]).sum(axis=1).max())
            corr = shrink * float((env * pair_norms).sum())
            method = "envelope"
        else:
            main, corr = _relaxed_reach(cb, j, pairing, shrink)
            method = "relaxation"
        parts.append(Interval(0.0, main + corr, True, dil.upper_certified,
                              {"dilation_correction": corr}, {"method": method, "dilation": dil.upper}))
        notes[f"orientation_{j}"] = {"main": main, "correction": corr, "method": method, "dilation": dil.upper}
        if samples:
            notes[f"samples_{j}"] = max(sampled_bridge_values(cb, j, samples, seed))
    out = parts[0].hull_max(parts[1])
    return Interval(out.lower, out.upper, out.lower_certified, out.upper_certified, out.slack, notes)


def _pairing_dilation(pairing: LinearMap, L_src: LSeminorm, L_dst: LSeminorm) -> Interval:
    if pairing.source is pairing.target and np.allclose(pairing.matrix, np.eye(pairing.source.dim)):
        if L_src is L_dst:
            return Interval.exact(1.0)
    # each Lip-norm evaluation on a large fuzzy torus costs one SVD per group element
    samples = 16 if max(pairing.source.dim, pairing.target.dim) <= 64 else 0
    return dilation(pairing, L_src, L_dst, samples=samples)


def _relaxed_reach(cb: CovariantBridge, j: int, pairing: LinearMap, shrink: float) -> tuple[float, float]:
    """``ball_radius * sqrt(sum ||T e_i||_F^2)`` over an orthonormal basis of the unit's complement."""
    br = cb.bridge
    L = cb.systems[j].seminorm
    Q = L.complement_basis()
    radius = L.ball_radius()
    src_emb, dst_emb = (br.emb_a, br.emb_b) if j == 0 else (br.emb_b, br.emb_a)
    x = br.pivot
    other = pairing.coords(Q.T)  # (r, D_dst)
    worst = 0.0
    for g, h in cb.group_pairs(j):
        own = src_emb.ambient(Q.T @ cb.systems[j].act(g).matrix.T)
        moved = dst_emb.ambient(other @ cb.systems[1 - j].act(h).matrix.T)
        D = own @ x - x @ moved if j == 0 else moved @ x - x @ own
        worst = max(worst, float(np.sqrt((np.abs(D) ** 2).sum())))
    pn = float(np.sqrt((np.abs(dst_emb.ambient(other) ** 2)).sum())) * float(np.linalg.norm(x, 2))
    return worst * radius, shrink * pn * radius


def sampled_bridge_values(cb: CovariantBridge, j: int, samples: int, seed: int = 0) -> list[float]:
    """``sup_g bn(alpha^g a, beta^{s(g)} Phi(a))`` for random ``a`` with ``L(a) = 1``."""
    br = cb.bridge
    L = cb.systems[j].seminorm
    pairing = cb.pairing if j == 0 else cb.pairing_back
    src_emb, dst_emb = (br.emb_a, br.emb_b) if j == 0 else (br.emb_b, br.emb_a)
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((samples, L.algebra.dim))
    C /= L.eval_coords(C)[:, None]
    x = br.pivot
    best = np.zeros(samples)
    for g, h in cb.group_pairs(j):
        own = src_emb.ambient(C @ cb.systems[j].act(g).matrix.T)
        moved = dst_emb.ambient(pairing.coords(C) @ cb.systems[1 - j].act(h).matrix.T)
        D = own @ x - x @ moved if j == 0 else moved @ x - x @ own
        best = np.maximum(best, np.linalg.norm(D, 2, axis=(-2, -1)))
    return best.tolist()


@dataclass
class BridgeLength:
    height: Interval
    reach: Interval

    @property
    def upper(self) -> float:
        return max(self.height.upper, self.reach.upper)

    def to_dict(self) -> dict:
        return {"height": self.height.to_dict(), "reach": self.reach.to_dict(), "upper": self.upper}


def bridge_length(cb: CovariantBridge, mesh: float = 0.25, seed: int = 0) -> BridgeLength:
    h = bridge_height(cb.bridge, cb.systems[0].seminorm, cb.systems[1].seminorm, mesh, seed)
    return BridgeLength(h, cov_bridge_reach(cb))


# ---------------------------------------------------------------------------
# tunnels from bridges


def tunnel_from_covariant_bridge(
    cb: CovariantBridge, eps: float, length: BridgeLength | None = None, check: bool = True
) -> CovariantTunnel:
    """Pivot ``A + B`` with ``L(a, b) = max(L_A(a), L_B(b), sup_g bn(...) / eps, sup_h bn(...) / eps)``.

    The result is ``4 eps``-covariant; its magnitude at ``4 eps`` is checked
    against ``4 eps``. Raises DomainError when ``eps`` is below the bridge
    length or the monoid maps fail the almost-isometry test at ``(eps, 1/eps)``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    length = bridge_length(cb) if length is None else length
    if eps < length.upper:
        raise DomainError(f"eps = {eps} is below the bridge length estimate {length.upper}")
    sa, sb = cb.systems
    if not check_almost_iso(cb.maps, sa.monoid, sb.monoid, eps, 1.0 / eps):
        raise DomainError("monoid maps are not an eps-almost isometry at radius 1/eps")
    br = cb.bridge
    A, B = br.algebras
    D, p1, p2 = direct_sum(A, B)
    groups = lift_seminorm_groups(sa.seminorm, p1.matrix) + lift_seminorm_groups(sb.seminorm, p2.matrix)
    groups.append(BridgeGroup(br, bridge_terms(cb, 1.0 / eps), eps))
    # kernel is R(1, 1): the hub minorant below already forces it, so skip the dense check
    L = LSeminorm(D, groups=groups, name="bridge-tunnel", check_kernel=False)
    hub_a, hub_b = br.hub_states()
    unit = D.unit_coords
    if L.eval_coords(unit)[0] > 1e-9 or abs(hub_a @ A.unit_coords - 1) > 1e-9 or abs(hub_b @ B.unit_coords - 1) > 1e-9:
        raise PropinqError("bridge seminorm kernel does not contain the unit")
    identity_bridge = A is B and br.emb_a is br.emb_b and np.allclose(br.pivot, np.eye(br.pivot.shape[0]))
    minorant = DiagonalBound(eps) if identity_bridge and sa is sb else HubBound((hub_a, hub_b), eps)
    tunnel = Tunnel(L, (p1, p2), (sa, sb), minorant, {"kind": "bridge", "eps": eps, "length": length.to_dict()})
    tunnel.meta["lift"] = partial(_paired_lift, cb.pairing, cb.pairing_back)
    out = CovariantTunnel(tunnel, cb.maps, 4.0 * eps)
    if check:
        m = magnitude(out, 4.0 * eps)
        tunnel.meta["magnitude"] = m.to_dict()
        if m.upper > 4.0 * eps + 1e-9:
            raise PropinqError(f"bridge tunnel magnitude {m.upper} exceeds 4 eps = {4 * eps}")
    return out


# ---------------------------------------------------------------------------
# fuzzy tori


def _paired_lift(pairing: LinearMap, pairing_back: LinearMap, leg: int, c: np.ndarray) -> np.ndarray:
    """Pivot coordinates ``(a, Phi(a))`` or ``(Phi'(b), b)``: a warm start for target-set fibers."""
    return np.concatenate([c, pairing.coords(c)]) if leg == 0 else np.concatenate([pairing_back.coords(c), c])


def fuzzy_system(A: FuzzyTorus, length="chordal") -> LipschitzDynamicalSystem:
    """The fuzzy torus with its Lip-norm and the dual action of ``U_k^d``."""
    L = lip_norm(A, length)
    G = A.dual_group(length)
    F = A.fourier_from_coords(np.eye(A.dim))

    def action(lam):
        return LinearMap(A, A, A._coords_from_fourier(F * A.characters(lam)[None, :]).T)

    return LipschitzDynamicalSystem(A, L, G, action, A.name)


def nearest_point_map(G, H) -> dict:
    """``g -> `` the closest element of ``H`` to the torus point of ``g`` (ties: smallest angle)."""
    return {g: H.nearest(G.torus_point(g)) for g in G.elements()}


def fejer_weights(points: np.ndarray, N: int) -> np.ndarray:
    return np.prod(np.clip(1.0 - np.abs(points) / (N + 1.0), 0.0, None), axis=1)


def fuzzy_bridge(
    k: Sequence[int],
    k2: Sequence[int],
    theta=None,
    eta=None,
    N: int = 1,
    length="chordal",
    systems: tuple[LipschitzDynamicalSystem, LipschitzDynamicalSystem] | None = None,
) -> CovariantBridge:
    """Covariant bridge between ``C*(Z_k^d, theta)`` and ``C*(Z_k2^d, eta)`` on ``l2(Z_K^d)``.

    Pivot: diagonal Fejer weights ``prod_j max(0, 1 - |n_j| / (N + 1))``, equal
    to 1 only at ``n = 0``. Monoid maps: nearest points in both directions.
    """
    if N < 0:
        raise DomainError("cutoff must be nonnegative")
    if systems is None:
        systems = (fuzzy_system(FuzzyTorus(k, theta), length), fuzzy_system(FuzzyTorus(k2, eta), length))
    A, B = systems[0].algebra, systems[1].algebra
    if len(A.k) != len(B.k):
        raise DomainError("fuzzy tori of different dimensions")
    K = tuple(math.lcm(a, b) for a, b in zip(A.k, B.k))
    emb_a, emb_b = BlockEmbedding(A, K), BlockEmbedding(B, K)
    x = np.diag(fejer_weights(emb_a.points, N)).astype(complex)
    bridge = Bridge(emb_a, emb_b, x, {"K": K, "N": N})
    G, H = systems[0].monoid, systems[1].monoid
    maps = MapPair(nearest_point_map(G, H), nearest_point_map(H, G), math.inf)
    return CovariantBridge(bridge, systems, maps)


def identity_bridge(system: LipschitzDynamicalSystem) -> CovariantBridge:
    """Both legs the same one-block system, pivot 1, identity monoid maps."""
    emb = IdentityEmbedding(system.algebra)
    bridge = Bridge(emb, emb, np.eye(emb.dim))
    elems = system.monoid.elements() if system.monoid.finite else system.monoid.ball(1.0)
    ident = {g: g for g in elems}
    return CovariantBridge(bridge, (system, system), MapPair(ident, dict(ident), math.inf))
