"""Metric monoids presented by ball enumerators, local almost/near isometric
isomorphisms between them, and the capped monoid distance ``upsilon``."""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .errors import DomainError, ResourceError
from .interval import Interval
from .metric_core import FiniteMetricSpace, PointedSpace

CAP = math.sqrt(2.0) / 2.0
SLACK = 1e-9
DEFAULT_MAX_BALL = 4096


class BallEnumerableMonoid(ABC):
    """A monoid with a left-invariant metric whose closed balls can be listed."""

    key: str = "monoid"
    finite: bool = False
    max_ball: int = DEFAULT_MAX_BALL

    @property
    @abstractmethod
    def identity(self) -> Hashable: ...

    @abstractmethod
    def multiply(self, g, h): ...

    @abstractmethod
    def dist(self, g, h) -> float: ...

    @abstractmethod
    def _enumerate_ball(self, radius: float) -> list: ...

    def ball(self, radius: float) -> list:
        """Closed ball about the identity, ordered by distance then canonically."""
        if radius < 0:
            return []
        elems = self._enumerate_ball(radius)
        if len(elems) > self.max_ball:
            raise ResourceError(
                f"ball of radius {radius:g} in {self.key} has {len(elems)} elements "
                f"(budget {self.max_ball})",
                completed=None,
            )
        e = self.identity
        return sorted(elems, key=lambda g: (self.dist(g, e), _order_key(g)))

    def dist_matrix(self, xs: Sequence, ys: Sequence) -> np.ndarray:
        return np.array([[self.dist(x, y) for y in ys] for x in xs], dtype=float)

    def norm(self, g) -> float:
        return self.dist(g, self.identity)

    def torus_point(self, g) -> np.ndarray | None:
        """Coordinates in a common ambient torus, when the monoid has one."""
        return None

    def elements(self) -> list:
        raise DomainError(f"{self.key} is not finite")

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.key}>"


def _order_key(g):
    if isinstance(g, tuple):
        return (len(g), g)
    return (0, (g,))


class FiniteMonoid(BallEnumerableMonoid):
    """Monoid given by a Cayley table over ``0..n-1`` and a distance matrix."""

    finite = True

    def __init__(self, table, dist, identity: int = 0, key: str | None = None, check: bool = True):
        self.table = np.asarray(table, dtype=np.int64)
        self.dmat = np.asarray(dist, dtype=float)
        self._identity = int(identity)
        n = self.table.shape[0]
        self.key = key or f"table:{n}:{hash((self.table.tobytes(), self.dmat.tobytes())) & 0xFFFFFFFF:08x}"
        if check:
            self.validate()

    @property
    def identity(self):
        return self._identity

    def multiply(self, g, h):
        return int(self.table[g, h])

    def dist(self, g, h):
        return float(self.dmat[g, h])

    def dist_matrix(self, xs, ys):
        return self.dmat[np.ix_(list(xs), list(ys))]

    def _enumerate_ball(self, radius):
        return [g for g in range(self.table.shape[0]) if self.dmat[g, self._identity] <= radius]

    def elements(self):
        return list(range(self.table.shape[0]))

    def validate(self) -> None:
        t, n, e = self.table, self.table.shape[0], self._identity
        if t.shape != (n, n) or t.min() < 0 or t.max() >= n:
            raise DomainError("Cayley table must be square with entries in range")
        if not (np.array_equal(t[e], np.arange(n)) and np.array_equal(t[:, e], np.arange(n))):
            raise DomainError("identity law fails")
        # (gh)k == g(hk) for all triples
        left = t[t[:, :, None], np.arange(n)[None, None, :]]
        right = t[np.arange(n)[:, None, None], t[None, :, :]]
        if not np.array_equal(left, right):
            raise DomainError("multiplication is not associative")
        FiniteMetricSpace(list(range(n)), self.dmat)
        # left invariance: d(gx, gy) == d(x, y)
        moved = self.dmat[t[:, :, None], t[:, None, :]]
        if np.max(np.abs(moved - self.dmat[None, :, :])) > 1e-12:
            raise DomainError("metric is not left invariant")


class FiniteAbelianGroup(BallEnumerableMonoid):
    """``Z_{n_1} x ... x Z_{n_d}`` with a scaled word or discrete metric.

    Elements are tuples of residues. The word metric is the l1 sum of cyclic
    word lengths; by default it is scaled so the diameter is 1.
    """

    finite = True

    def __init__(self, orders: Sequence[int], metric: str = "word", scale: float | None = None):
        self.orders = tuple(int(n) for n in orders)
        if any(n < 1 for n in self.orders):
            raise DomainError("group orders must be positive")
        if metric not in ("word", "discrete"):
            raise DomainError(f"unknown metric {metric!r}")
        self.metric = metric
        raw_diam = self._raw_diameter()
        if scale is None:
            scale = 1.0 / raw_diam if raw_diam > 0 else 1.0
        self.scale = float(scale)
        name = "trivial" if not self.orders else (
            f"cyclic:{self.orders[0]}" if len(self.orders) == 1 else "abelian:" + ",".join(map(str, self.orders))
        )
        self.key = f"{name}|{metric}|{self.scale!r}"
        self._elements = list(itertools.product(*[range(n) for n in self.orders]))

    def _raw_diameter(self) -> float:
        if self.metric == "discrete":
            return 1.0 if any(n > 1 for n in self.orders) else 0.0
        return float(sum(n // 2 for n in self.orders))

    @property
    def identity(self):
        return tuple(0 for _ in self.orders)

    def multiply(self, g, h):
        return tuple((a + b) % n for a, b, n in zip(g, h, self.orders))

    def dist(self, g, h):
        if g == h:
            return 0.0
        if self.metric == "discrete":
            return self.scale
        return self.scale * sum(min((a - b) % n, (b - a) % n) for a, b, n in zip(g, h, self.orders))

    def _enumerate_ball(self, radius):
        e = self.identity
        return [g for g in self._elements if self.dist(g, e) <= radius]

    def elements(self):
        return list(self._elements)


class NaturalMonoid(BallEnumerableMonoid):
    """``N^d`` under addition with ``scale`` times the l1 metric."""

    def __init__(self, d: int = 1, scale: float = 0.5):
        if d < 1 or scale <= 0:
            raise DomainError("natural monoid needs d >= 1 and a positive scale")
        self.d = int(d)
        self.scale = float(scale)
        self.key = f"natural:{self.d}|{self.scale!r}"

    @property
    def identity(self):
        return tuple(0 for _ in range(self.d))

    def multiply(self, g, h):
        return tuple(a + b for a, b in zip(g, h))

    def dist(self, g, h):
        return self.scale * sum(abs(a - b) for a, b in zip(g, h))

    def _enumerate_ball(self, radius):
        top = int(math.floor(radius / self.scale + 1e-12))
        out = []
        for g in itertools.product(range(top + 1), repeat=self.d):
            if sum(g) <= top:
                out.append(g)
            if len(out) > self.max_ball:
                break
        return out


LENGTHS = ("chordal", "geodesic", "hermitian")


def torus_length(points: np.ndarray, kind: str = "chordal", scale: float = 1.0) -> np.ndarray:
    """Length of points of ``T^d`` given as complex arrays (last axis = coordinates)."""
    if kind == "chordal":
        out = np.abs(points - 1.0).max(axis=-1)
    elif kind == "geodesic":
        out = np.abs(np.angle(points)).max(axis=-1)
    elif kind == "hermitian":
        out = np.sqrt((np.abs(points - 1.0) ** 2).sum(axis=-1))
    else:
        raise DomainError(f"unknown length function {kind!r}")
    return scale * out


class DualTorus(BallEnumerableMonoid):
    """The group of ``k``-th roots ``U_k^d`` with the metric ``l(lambda^{-1} mu)``.

    Elements are exponent tuples ``m`` standing for ``exp(2 pi i m_j / k_j)``.
    """

    finite = True

    def __init__(self, k: Sequence[int], length: str = "chordal", scale: float = 1.0):
        self.k = tuple(int(x) for x in k)
        if not self.k or any(x < 1 for x in self.k):
            raise DomainError("dual torus needs positive orders")
        if length not in LENGTHS:
            raise DomainError(f"unknown length function {length!r}")
        if not scale > 0:
            raise DomainError("length scale must be positive")
        self.length = length
        self.scale = float(scale)
        self.key = "dual-torus:" + ",".join(map(str, self.k)) + f"|{length}|{self.scale!r}"
        self._elements = list(itertools.product(*[range(n) for n in self.k]))
        self._points = np.array([self.torus_point(m) for m in self._elements]).reshape(len(self._elements), len(self.k))
        self._index = {m: i for i, m in enumerate(self._elements)}

    @property
    def identity(self):
        return tuple(0 for _ in self.k)

    def multiply(self, g, h):
        return tuple((a + b) % n for a, b, n in zip(g, h, self.k))

    def torus_point(self, g):
        return np.exp(2j * np.pi * np.array(g, dtype=float) / np.array(self.k, dtype=float))

    def _gap_points(self, diff: np.ndarray) -> np.ndarray:
        # lengths are conjugation invariant, so fold exponents into [0, k/2]:
        # equal elements give exactly 1 and the result is exactly symmetric
        k = np.array(self.k)
        m = np.mod(diff, k)
        m = np.minimum(m, k - m)
        return np.exp(2j * np.pi * m / k)

    def dist(self, g, h):
        diff = np.array(h, dtype=np.int64) - np.array(g, dtype=np.int64)
        return float(torus_length(self._gap_points(diff)[None, :], self.length, self.scale)[0])

    def dist_matrix(self, xs, ys):
        px = np.array(xs, dtype=np.int64).reshape(len(xs), len(self.k))
        py = np.array(ys, dtype=np.int64).reshape(len(ys), len(self.k))
        return torus_length(self._gap_points(py[None, :, :] - px[:, None, :]), self.length, self.scale)

    def _enumerate_ball(self, radius):
        lengths = torus_length(self._points, self.length, self.scale)
        return [m for m, v in zip(self._elements, lengths) if v <= radius]

    def elements(self):
        return list(self._elements)

    def nearest(self, point: np.ndarray, among: Sequence | None = None):
        """Closest element to a torus point; ties go to the smallest angle vector."""
        pool = self._elements if among is None else list(among)
        pts = np.array([self.torus_point(m) for m in pool]).reshape(len(pool), len(self.k))
        gaps = torus_length(np.conj(pts) * np.asarray(point)[None, :], self.length, self.scale)
        best = gaps.min()
        ties = [m for m, v in zip(pool, gaps) if v <= best + 1e-12]
        return min(ties, key=lambda m: tuple(2 * np.pi * a / n for a, n in zip(m, self.k)))


def parse_monoid(spec: Any) -> BallEnumerableMonoid:
    """Build a monoid from a named generator string or a JSON-style dict.

    Accepted names: ``trivial``, ``cyclic:n``, ``abelian:n1,...``,
    ``natural:d``, ``dual-torus:k1,...,kd``. A dict may carry ``name`` plus
    ``metric``/``scale``/``length`` keys, or ``table``/``dist``/``identity``
    for an explicit finite monoid.
    """
    if isinstance(spec, BallEnumerableMonoid):
        return spec
    params: dict[str, Any] = {}
    if isinstance(spec, Mapping):
        if "table" in spec:
            return FiniteMonoid(spec["table"], spec["dist"], spec.get("identity", 0), spec.get("key"))
        params = {k: v for k, v in spec.items() if k != "name"}
        spec = spec["name"]
    if not isinstance(spec, str):
        raise DomainError(f"cannot parse monoid spec {spec!r}")
    name, _, arg = spec.partition(":")
    try:
        nums = [int(x) for x in arg.split(",") if x.strip()] if arg else []
    except ValueError as exc:
        raise DomainError(f"bad monoid parameters in {spec!r}") from exc
    if name == "trivial":
        return FiniteAbelianGroup([], **params)
    if name == "cyclic":
        if len(nums) != 1:
            raise DomainError("cyclic:n takes one order")
        return FiniteAbelianGroup(nums, **params)
    if name == "abelian":
        return FiniteAbelianGroup(nums, **params)
    if name == "natural":
        return NaturalMonoid(nums[0] if nums else 1, **params)
    if name == "dual-torus":
        return DualTorus(nums, **params)
    raise DomainError(f"unknown monoid generator {name!r}")


def as_pointed_space(G: BallEnumerableMonoid, radius: float | None = None) -> PointedSpace:
    """The monoid (or its ball of the given radius) as a pointed finite metric space."""
    elems = G.elements() if G.finite and radius is None else G.ball(radius if radius is not None else 0.0)
    base = elems.index(G.identity)
    return PointedSpace(FiniteMetricSpace(elems, G.dist_matrix(elems, elems)), base)


# ---------------------------------------------------------------------------
# map pairs and their checks


@dataclass
class MapPair:
    """Ball-restricted maps ``forward: G -> H`` and ``backward: H -> G``."""

    forward: dict
    backward: dict
    radius: float = 0.0

    def is_unital(self, G: BallEnumerableMonoid, H: BallEnumerableMonoid) -> bool:
        return self.forward.get(G.identity) == H.identity and self.backward.get(H.identity) == G.identity

    def reversed(self) -> MapPair:
        return MapPair(dict(self.backward), dict(self.forward), self.radius)

    @classmethod
    def identity(cls, G: BallEnumerableMonoid, radius: float) -> MapPair:
        ball = G.ball(radius)
        return cls({g: g for g in ball}, {g: g for g in ball}, radius)

    @classmethod
    def constant(cls, G: BallEnumerableMonoid, H: BallEnumerableMonoid, radius: float) -> MapPair:
        return cls({g: H.identity for g in G.ball(radius)}, {h: G.identity for h in H.ball(radius)}, radius)


class _Frame:
    """Integer indexing of one side: the ball, extra elements, and their products."""

    def __init__(self, monoid: BallEnumerableMonoid, ball: Sequence, extra: Sequence = ()):
        self.monoid = monoid
        universe = list(dict.fromkeys(list(ball) + list(extra)))
        self.m = len(universe)
        index = {g: i for i, g in enumerate(universe)}
        mul = np.empty((self.m, self.m), dtype=np.int64)
        for i, a in enumerate(universe[: self.m]):
            for j, b in enumerate(universe[: self.m]):
                p = monoid.multiply(a, b)
                if p not in index:
                    index[p] = len(universe)
                    universe.append(p)
                mul[i, j] = index[p]
        self.universe = universe
        self.index = index
        self.mul = mul
        self.dist = np.ascontiguousarray(monoid.dist_matrix(universe, universe), dtype=float)
        self.ball = np.array([index[g] for g in ball], dtype=np.int64)

    def indices(self, elems: Sequence) -> np.ndarray:
        return np.array([self.index[g] for g in elems], dtype=np.int64)


def _require(mapping: Mapping, keys: Sequence, what: str) -> list:
    try:
        return [mapping[g] for g in keys]
    except KeyError as exc:
        raise DomainError(f"{what} is not defined at {exc.args[0]!r}") from None


def almost_iso_defect(p: MapPair, G: BallEnumerableMonoid, H: BallEnumerableMonoid, r: float) -> float:
    """Least eps for which ``p`` satisfies the two-sided almost-isometry bound at radius r.

    Unit preservation is not part of this number; see ``check_almost_iso``.
    """
    ball_g = G.ball(r)
    ball_h = H.ball(r)
    sig = _require(p.forward, ball_g, "forward map")
    kap = _require(p.backward, ball_h, "backward map")
    fg = _Frame(G, ball_g, kap)
    fh = _Frame(H, ball_h, sig)
    return kernels.pair_defect(fg.mul, fg.dist, fg.ball, fh.mul, fh.dist, fh.ball, fh.indices(sig), fg.indices(kap))


def check_almost_iso(
    p: MapPair, G: BallEnumerableMonoid, H: BallEnumerableMonoid, eps: float, r: float, slack: float = SLACK
) -> bool:
    """Exact enumeration of the r-local eps-almost isometric isomorphism conditions."""
    if eps < 0 or r < 0:
        raise DomainError("eps and r must be nonnegative")
    defect = almost_iso_defect(p, G, H, r)
    return p.is_unital(G, H) and defect <= eps + slack


def near_iso_defect(p: MapPair, G: BallEnumerableMonoid, H: BallEnumerableMonoid, r: float) -> float:
    """Largest violation among the four near-isometry conditions at radius r."""
    worst = 0.0
    for src, dst, fwd, bwd in ((G, H, p.forward, p.backward), (H, G, p.backward, p.forward)):
        ball = src.ball(r)
        half = src.ball(r / 2.0)
        img = _require(fwd, ball, "map")
        if half:
            img_half = _require(fwd, half, "map")
            prods = [src.multiply(a, b) for a in half for b in half]
            img_prod = _require(fwd, prods, "map on products")
            lhs = [dst.multiply(x, y) for x in img_half for y in img_half]
            worst = max(worst, float(np.max(np.diag(dst.dist_matrix(lhs, img_prod)))))
        gap = np.abs(dst.dist_matrix(img, img) - src.dist_matrix(ball, ball))
        worst = max(worst, float(gap.max(initial=0.0)))
        back = _require(bwd, img, "map on images")
        worst = max(worst, float(np.max(np.diag(src.dist_matrix(back, ball)), initial=0.0)))
        e_img = _require(fwd, [src.identity], "map")[0]
        worst = max(worst, dst.dist(e_img, dst.identity))
    return worst


def check_near_iso(
    p: MapPair,
    G: BallEnumerableMonoid,
    H: BallEnumerableMonoid,
    eps: float,
    r: float,
    unital: bool = False,
    slack: float = SLACK,
) -> bool:
    """Check the four eps-near r-local isometric isomorphism conditions by enumeration.

    The maps only need to be defined where the conditions evaluate them: the
    r-balls, products of the r/2-balls, and images of the r-balls. A missing
    value raises DomainError.
    """
    if eps < 0 or r < 0:
        raise DomainError("eps and r must be nonnegative")
    if unital and not p.is_unital(G, H):
        return False
    return near_iso_defect(p, G, H, r) <= eps + slack


def unitize_near_iso(p: MapPair, G: BallEnumerableMonoid, H: BallEnumerableMonoid) -> MapPair:
    """Redefine both maps at the identity only, making the pair unital."""
    fwd = dict(p.forward)
    bwd = dict(p.backward)
    fwd[G.identity] = H.identity
    bwd[H.identity] = G.identity
    return MapPair(fwd, bwd, p.radius)


def compose_almost_iso(
    p1: MapPair,
    p2: MapPair,
    eps1: float,
    eps2: float,
    G1: BallEnumerableMonoid,
    G2: BallEnumerableMonoid,
    G3: BallEnumerableMonoid,
) -> MapPair:
    """``(s2 o s1, k1 o k2)`` restricted to the balls of radius ``1/(eps1+eps2)``."""
    for e in (eps1, eps2):
        if not 0 < e <= CAP + 1e-15:
            raise DomainError(f"composition needs eps in (0, sqrt(2)/2], got {e}")
    r = 1.0 / (eps1 + eps2)
    mid_f = _require(p1.forward, G1.ball(r), "first forward map")
    fwd = dict(zip(G1.ball(r), _require(p2.forward, mid_f, "second forward map on intermediate images")))
    mid_b = _require(p2.backward, G3.ball(r), "second backward map")
    bwd = dict(zip(G3.ball(r), _require(p1.backward, mid_b, "first backward map on intermediate images")))
    return MapPair(fwd, bwd, r)


# ---------------------------------------------------------------------------
# feasibility search and upsilon


@dataclass
class Feasibility:
    status: str  # "feasible" | "infeasible" | "unknown"
    witness: MapPair | None = None
    exhaustive: bool = True
    nodes: int = 0


def _candidates(src: BallEnumerableMonoid, dst: BallEnumerableMonoid, g, pool: Sequence, tol: float) -> list:
    # ordered by the nearest-image heuristic; only elements whose norm can match
    norm = src.norm(g)
    pg = src.torus_point(g)
    scored = []
    for c in pool:
        gap = abs(dst.norm(c) - norm)
        if gap > tol:
            continue
        pc = dst.torus_point(c)
        if pg is not None and pc is not None and pg.shape == pc.shape:
            score = float(np.abs(pc - pg).max())
        else:
            score = gap
        scored.append((score, gap, _order_key(c), c))
    scored.sort(key=lambda t: t[:3])
    return [t[3] for t in scored]


def _heuristic_witness(G, H, r, eps):
    # nearest-point maps when both monoids live in a common torus
    if not (isinstance(G, DualTorus) and isinstance(H, DualTorus) and len(G.k) == len(H.k)):
        return None
    pool_h = H.ball(r + eps)
    pool_g = G.ball(r + eps)
    fwd = {g: H.nearest(G.torus_point(g), pool_h) for g in G.ball(r)}
    bwd = {h: G.nearest(H.torus_point(h), pool_g) for h in H.ball(r)}
    return unitize_near_iso(MapPair(fwd, bwd, r), G, H)


def upsilon_feasible(
    G: BallEnumerableMonoid,
    H: BallEnumerableMonoid,
    eps: float,
    node_budget: int = 2_000_000,
    slack: float = SLACK,
) -> Feasibility:
    """Is there a unital eps-almost isometric isomorphism at radius 1/eps?

    Depth-first search over both maps at once. Candidate images are pruned
    to elements whose norm is within eps of the source norm, which every
    member of the set must satisfy; the first witness in the canonical
    order is returned. On budget exhaustion a nearest-point pair is tried
    before answering "unknown".
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    r = 1.0 / eps
    tol = eps + slack
    ball_g = G.ball(r)
    ball_h = H.ball(r)
    pool_g = G.ball(r + eps)
    pool_h = H.ball(r + eps)
    fg = _Frame(G, ball_g, pool_g)
    fh = _Frame(H, ball_h, pool_h)

    def csr(src, dst, ball, frame_dst):
        ptr = [0]
        cand: list[int] = []
        for g in ball:
            if g == src.identity:
                opts = [dst.identity]
            else:
                opts = _candidates(src, dst, g, frame_dst.universe[: frame_dst.m], tol)
            cand.extend(frame_dst.index[c] for c in opts)
            ptr.append(len(cand))
        return np.array(ptr, dtype=np.int64), np.array(cand, dtype=np.int64)

    sig_ptr, sig_cand = csr(G, H, ball_g, fh)
    kap_ptr, kap_cand = csr(H, G, ball_h, fg)
    sig0 = np.full(len(ball_g), -1, dtype=np.int64)
    kap0 = np.full(len(ball_h), -1, dtype=np.int64)
    sig0[ball_g.index(G.identity)] = fh.index[H.identity]
    kap0[ball_h.index(H.identity)] = fg.index[G.identity]
    order = [(G.norm(g), 0, i) for i, g in enumerate(ball_g) if g != G.identity]
    order += [(H.norm(h), 1, i) for i, h in enumerate(ball_h) if h != H.identity]
    order.sort()
    var_side = np.array([o[1] for o in order], dtype=np.int64)
    var_pos = np.array([o[2] for o in order], dtype=np.int64)
    status, sig, kap, nodes = kernels.search_pair(
        fg.mul, fg.dist, fg.ball, fh.mul, fh.dist, fh.ball,
        sig_ptr, sig_cand, kap_ptr, kap_cand, var_side, var_pos, sig0, kap0, tol, node_budget,
    )
    if status == kernels.FOUND:
        witness = MapPair(
            {g: fh.universe[int(s)] for g, s in zip(ball_g, sig)},
            {h: fg.universe[int(k)] for h, k in zip(ball_h, kap)},
            r,
        )
        return Feasibility("feasible", witness, True, int(nodes))
    if status == kernels.EXHAUSTED:
        return Feasibility("infeasible", None, True, int(nodes))
    guess = _heuristic_witness(G, H, r, eps)
    if guess is not None and check_almost_iso(guess, G, H, eps, r, slack):
        return Feasibility("feasible", guess, False, int(nodes))
    return Feasibility("unknown", None, False, int(nodes))


def upsilon(
    G: BallEnumerableMonoid,
    H: BallEnumerableMonoid,
    tol: float = 1e-3,
    node_budget: int = 2_000_000,
) -> Interval:
    """Bracket ``min(sqrt(2)/2, inf{eps : UIso_eps at radius 1/eps is nonempty})``.

    Bisection on ``[0, sqrt(2)/2]`` until the width is at most ``tol``. The
    computation runs in a canonical orientation so that swapping the
    arguments gives the same interval. The lower end is certified only if
    every infeasible verdict was exhaustive.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    G, H = parse_monoid(G), parse_monoid(H)
    swap = G.key > H.key
    if swap:
        G, H = H, G
    if G.key == H.key:
        return Interval(0.0, 0.0, True, True, {}, {"witness": "identity", "exhaustive": True})
    lo, hi = 0.0, CAP
    lo_certified = True
    witness = None
    largest_radius = None
    total_nodes = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            res = upsilon_feasible(G, H, mid, node_budget)
        except ResourceError as exc:
            raise ResourceError(str(exc), completed=largest_radius) from exc
        largest_radius = max(largest_radius or 0.0, 1.0 / mid)
        total_nodes += res.nodes
        if res.status == "feasible":
            hi = mid
            witness = res.witness
        else:
            lo = mid
            lo_certified = lo_certified and res.status == "infeasible"
    if witness is not None and swap:
        witness = witness.reversed()
    notes: dict[str, Any] = {"exhaustive": lo_certified, "nodes": total_nodes}
    if witness is not None:
        notes["witness"] = {"forward": witness.forward, "backward": witness.backward, "radius": witness.radius}
    return Interval(lo, hi, lo_certified, True, {"bisection": tol}, notes)


def find_isometric_isomorphism(G: BallEnumerableMonoid, H: BallEnumerableMonoid) -> dict | None:
    """Exhaustive search for a distance-preserving monoid isomorphism of finite monoids.

    Independent of the almost-isometry machinery: plain backtracking over
    bijections with multiplicativity and isometry checked on assigned pairs.
    """
    if not (G.finite and H.finite):
        raise DomainError("isomorphism search needs finite monoids")
    gs = G.elements()
    hs = H.elements()
    if len(gs) != len(hs):
        return None
    gs = sorted(gs, key=lambda g: (G.norm(g), _order_key(g)))
    assign: dict = {G.identity: H.identity}
    used = {H.identity}
    rest = [g for g in gs if g != G.identity]

    def ok(g, h) -> bool:
        if abs(G.norm(g) - H.norm(h)) > 1e-12:
            return False
        for a, b in assign.items():
            if abs(G.dist(g, a) - H.dist(h, b)) > 1e-12:
                return False
        trial = dict(assign)
        trial[g] = h
        for a, b in trial.items():
            for c in (g,):
                for x, y in ((a, c), (c, a)):
                    prod = G.multiply(x, y)
                    if prod in trial and trial[prod] != H.multiply(trial[x], trial[y]):
                        return False
            prod = G.multiply(a, a)
            if prod in trial and trial[prod] != H.multiply(trial[a], trial[a]):
                return False
        return True

    def extend(i: int) -> bool:
        if i == len(rest):
            return all(
                assign[G.multiply(a, b)] == H.multiply(assign[a], assign[b]) for a in gs for b in gs
            )
        g = rest[i]
        for h in hs:
            if h in used or not ok(g, h):
                continue
            assign[g] = h
            used.add(h)
            if extend(i + 1):
                return True
            del assign[g]
            used.discard(h)
        return False

    return dict(assign) if extend(0) else None
