"""Lipschitz dynamical systems, covariant tunnels and their extent, reach and magnitude.

Estimators pick the sharpest route available for a tunnel:

* ``metric``: commutative pivot whose seminorm is a Lipschitz constant and legs
  that send points to points. Distances from a point mass are linear in the
  other state, so every Hausdorff term is a small exact LP.
* ``hub``: the pivot seminorm dominates the gap between one pair of hub
  states (bridge tunnels). Closed-form upper ends through hub radii.
* ``diagonal``: two legs onto the same system whose difference is controlled
  in norm (identity bridges). Extent and reach are exactly the gap.
* ``lp``: commutative legs and a polyhedral pivot seminorm (or minorant).
  Convexity puts the worst state at a point mass; one LP per point.
* ``net``: anything else, through state nets and relaxed MK upper bounds.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Any

import numpy as np
from scipy import sparse

from .errors import DomainError, PropinqError
from .interval import Interval
from .metric_core import FiniteMetricSpace
from .monoid_metric import (
    CAP,
    BallEnumerableMonoid,
    MapPair,
    check_almost_iso,
    compose_almost_iso,
    parse_monoid,
)
from .qcms import (
    LP_SLACK,
    ConstraintGroup,
    FiniteCStarAlgebra,
    LinearMap,
    LSeminorm,
    RowGroup,
    TensorGroup,
    _linprog,
    check_quantum_isometry,
    commutative_algebra,
    lipschitz_seminorm,
    quotient_seminorm,
    transport_distance,
    state_net,
)

# ---------------------------------------------------------------------------
# systems


class LipschitzDynamicalSystem:
    """An algebra with a Lip-norm and a metric monoid acting by unital positive maps."""

    def __init__(
        self,
        algebra: FiniteCStarAlgebra,
        seminorm: LSeminorm,
        monoid: BallEnumerableMonoid | None = None,
        action: Callable[[Any], LinearMap] | None = None,
        name: str = "",
    ):
        self.algebra = algebra
        self.seminorm = seminorm
        self.monoid = monoid if monoid is not None else parse_monoid("trivial")
        self._action = action
        self._cache: dict = {}
        self.name = name or algebra.name

    def act(self, g) -> LinearMap:
        if g not in self._cache:
            if self._action is None:
                if g != self.monoid.identity:
                    raise DomainError("system has no action")
                self._cache[g] = LinearMap.identity(self.algebra)
            else:
                self._cache[g] = self._action(g)
        return self._cache[g]

    def ball(self, radius: float) -> list:
        return self.monoid.ball(radius)

    def validate(self, samples: int = 10, seed: int = 0, tol: float = 1e-9) -> dict:
        """Unital, positive and multiplicative checks on enumerated or sampled elements."""
        A = self.algebra
        rng = np.random.default_rng(seed)
        elems = self.monoid.elements() if self.monoid.finite else self.monoid.ball(1.0)
        if len(elems) > samples:
            picks = rng.choice(len(elems), size=samples, replace=False)
            elems = [elems[i] for i in sorted(picks)]
        unital = positive = True
        for g in elems:
            m = self.act(g)
            unital = unital and m.unital
            positive = positive and _is_positive(m, rng, tol)
        mult_dev = 0.0
        for _ in range(samples):
            g, h = (elems[int(i)] for i in rng.integers(len(elems), size=2))
            gh = self.monoid.multiply(g, h)
            lhs = self.act(gh).matrix
            rhs = self.act(g).matrix @ self.act(h).matrix
            rhs_alt = self.act(h).matrix @ self.act(g).matrix
            mult_dev = max(mult_dev, min(np.abs(lhs - rhs).max(), np.abs(lhs - rhs_alt).max()))
        report = {
            "unital": bool(unital),
            "positive": bool(positive),
            "multiplicative_deviation": float(mult_dev),
            "strong_continuity": "vacuous at desk scale",
        }
        report["ok"] = report["unital"] and report["positive"] and mult_dev <= 1e-9
        return report

    @classmethod
    def static(cls, algebra: FiniteCStarAlgebra, seminorm: LSeminorm, name: str = "") -> LipschitzDynamicalSystem:
        return cls(algebra, seminorm, None, None, name)


def _is_positive(m: LinearMap, rng, tol: float) -> bool:
    A, B = m.source, m.target
    if A.commutative and B.commutative:
        return bool(np.all(m.matrix >= -tol))
    for _ in range(8):
        c = A.random_sa(rng)
        p = A.mul(c, c)
        if B.max_eig(B.scale(m(p), -1.0)) > tol * max(1.0, A.norm(p)):
            return False
    return True


def metric_system(space: FiniteMetricSpace, monoid: BallEnumerableMonoid | None = None, point_map=None, name=""):
    """``C(X)`` with its Lipschitz seminorm; ``point_map(g, i)`` gives ``g . x_i``.

    The action is ``(alpha^g f)(x) = f(g . x)``, so the pulled-back point
    mass at ``x`` is the point mass at ``g . x``.
    """
    A, L = lipschitz_seminorm(space)
    if monoid is None:
        return LipschitzDynamicalSystem.static(A, L, name)
    n = len(space)

    def action(g):
        M = np.zeros((n, n))
        for i in range(n):
            M[i, point_map(g, i)] = 1.0
        return LinearMap(A, A, M)

    return LipschitzDynamicalSystem(A, L, monoid, action, name)


def group_system(G: BallEnumerableMonoid, scale: float = 1.0, name: str = "") -> LipschitzDynamicalSystem:
    """``C(G)`` for a finite group with ``scale`` times its metric, acted on by translation."""
    elems = G.elements()
    index = {g: i for i, g in enumerate(elems)}
    space = FiniteMetricSpace(elems, scale * G.dist_matrix(elems, elems))
    return metric_system(space, G, lambda g, i: index[G.multiply(g, elems[i])], name or G.key)


# ---------------------------------------------------------------------------
# algebra plumbing


class LiftedGroup(ConstraintGroup):
    """A constraint group precomposed with a coordinate map ``M``."""

    def __init__(self, group: ConstraintGroup, M: np.ndarray):
        self.group = group
        self.M = np.asarray(M, dtype=float)
        self.count = group.count
        self.shape = group.shape
        self.scales = group.scales

    def images(self, C):
        return self.group.images(np.atleast_2d(C) @ self.M.T)

    def pullback(self, X):
        return self.group.pullback(X) @ self.M

    def rows(self):
        r = self.group.rows()
        return None if r is None else r @ self.M


def lift_seminorm_groups(L: LSeminorm, M: np.ndarray) -> list[ConstraintGroup]:
    return [LiftedGroup(g, M) for g in L.groups]


class SumAlgebra(FiniteCStarAlgebra):
    """``A1 + A2`` with concatenated coordinates; no dense basis is built."""

    def __init__(self, A1: FiniteCStarAlgebra, A2: FiniteCStarAlgebra):
        self.parts = (A1, A2)
        self.blocks = A1.blocks + A2.blocks
        self.full = False
        self.name = f"{A1.name}+{A2.name}"
        self._split = A1.dim
        self.dim = A1.dim + A2.dim
        self._k1 = len(A1.blocks)
        self._unit_coords = np.concatenate([A1.unit_coords, A2.unit_coords])

    def coords(self, a):
        a = self._as_element(a)
        return np.concatenate([self.parts[0].coords(a[: self._k1]), self.parts[1].coords(a[self._k1 :])])

    pair = coords

    def element(self, c):
        c = np.asarray(c, float)
        return list(self.parts[0].element(c[: self._split])) + list(self.parts[1].element(c[self._split :]))

    def element_vec(self, c):
        from .qcms import _vec

        return _vec(self.element(c))


def direct_sum(A1: FiniteCStarAlgebra, A2: FiniteCStarAlgebra) -> tuple[FiniteCStarAlgebra, LinearMap, LinearMap]:
    """``A1 + A2`` with its two coordinate projections."""
    n1, n2 = A1.dim, A2.dim
    P1 = np.hstack([np.eye(n1), np.zeros((n1, n2))])
    P2 = np.hstack([np.zeros((n2, n1)), np.eye(n2)])
    if A1.commutative and A2.commutative:
        D = commutative_algebra(n1 + n2, name=f"{A1.name}+{A2.name}")
        return D, LinearMap(D, A1, P1), LinearMap(D, A2, P2)
    D = SumAlgebra(A1, A2)
    k1 = len(A1.blocks)
    return (
        D,
        LinearMap(D, A1, P1, lambda d: list(d[:k1])),
        LinearMap(D, A2, P2, lambda d: list(d[k1:])),
    )


def norm_group(B: FiniteCStarAlgebra, M: np.ndarray, scale: float) -> list[ConstraintGroup]:
    """Constraints for ``||b(c)|| / scale`` where ``b(c)`` has B-coordinates ``M c``."""
    if B.commutative:
        return [RowGroup(M, np.full(M.shape[0], scale))]
    out = []
    elems = [B.element(M[:, j]) for j in range(M.shape[1])]
    for bi, n in enumerate(B.blocks):
        tensor = np.stack([e[bi] for e in elems], axis=-1)[None]
        out.append(TensorGroup(tensor, [scale]))
    return out


# ---------------------------------------------------------------------------
# tunnels


@dataclass
class HubBound:
    """Certified minorant ``L_D(d) >= |h_A(pi_A d) - h_B(pi_B d)| / gap`` for one pair of hub states.

    With legs' Lip-norms this gives ``MK(phi o pi_A, psi o pi_B) <= gap +
    MK_A(phi, h_A) + MK_B(h_B, psi)``, which drives the closed-form bounds.
    """

    hubs: tuple[np.ndarray, np.ndarray]
    gap: float

    def reversed(self) -> HubBound:
        return HubBound((self.hubs[1], self.hubs[0]), self.gap)


@dataclass
class DiagonalBound:
    """Minorant ``L_D(d) >= ||pi_A d - pi_B d|| / gap`` for two legs onto the same system."""

    gap: float

    def reversed(self) -> DiagonalBound:
        return self


@dataclass
class Tunnel:
    """Pivot ``(D, L_D)`` with quantum-isometry legs onto two systems."""

    seminorm: LSeminorm
    legs: tuple[LinearMap, LinearMap]
    systems: tuple[LipschitzDynamicalSystem, LipschitzDynamicalSystem]
    minorant: HubBound | DiagonalBound | LSeminorm | None = None
    meta: dict = field(default_factory=dict)

    @property
    def pivot(self) -> FiniteCStarAlgebra:
        return self.seminorm.algebra

    def validate(self, samples: int = 20, seed: int = 0, tol: float = 1e-6) -> dict:
        reports = []
        for leg, system in zip(self.legs, self.systems):
            if leg.source is not self.pivot or leg.target is not system.algebra:
                raise DomainError("leg does not connect the pivot to its system")
            reports.append(check_quantum_isometry(leg, self.seminorm, system.seminorm, samples, seed, tol))
        return {"legs": reports, "ok": all(r["ok"] for r in reports)}

    def reversed(self) -> Tunnel:
        return Tunnel(
            self.seminorm,
            (self.legs[1], self.legs[0]),
            (self.systems[1], self.systems[0]),
            _reverse_minorant(self.minorant),
            _reverse_meta(self.meta),
        )


def _reverse_minorant(m):
    return m.reversed() if isinstance(m, (HubBound, DiagonalBound)) else m


def _reverse_meta(meta: dict) -> dict:
    # the pivot is unchanged, so leg-indexed entries only need their leg flipped
    out = {k: v for k, v in meta.items() if k not in ("hub_radii", "lift")}
    if "hub_radii" in meta:
        out["hub_radii"] = meta["hub_radii"][::-1]
    if "lift" in meta:
        out["lift"] = partial(_flipped_lift, meta["lift"])
    return out


def _flipped_lift(lift, leg: int, c: np.ndarray) -> np.ndarray:
    return lift(1 - leg, c)


@dataclass
class CovariantTunnel:
    """A tunnel with a map pair ``(forward, backward)`` between the acting monoids."""

    tunnel: Tunnel
    maps: MapPair
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("covariance level must be positive")

    @property
    def systems(self):
        return self.tunnel.systems

    def covariant(self, eps: float | None = None) -> bool:
        eps = self.eps if eps is None else eps
        G, H = self.systems[0].monoid, self.systems[1].monoid
        try:
            return check_almost_iso(self.maps, G, H, eps, 1.0 / eps)
        except DomainError:
            return False

    def validate(self, samples: int = 20, seed: int = 0, tol: float = 1e-6) -> dict:
        rep = self.tunnel.validate(samples, seed, tol)
        rep["covariant"] = self.covariant()
        rep["ok"] = rep["ok"] and rep["covariant"]
        return rep

    def reversed(self) -> CovariantTunnel:
        return CovariantTunnel(self.tunnel.reversed(), self.maps.reversed(), self.eps)


def identity_tunnel(system: LipschitzDynamicalSystem, eps: float = CAP) -> CovariantTunnel:
    """``(A, L, id, id)`` with identity maps: the equivariant full quantum isometry case."""
    ident = LinearMap.identity(system.algebra)
    t = Tunnel(system.seminorm, (ident, ident), (system, system), meta={"kind": "identity"})
    return CovariantTunnel(t, MapPair.identity(system.monoid, 1.0 / eps), eps)


def isometry_tunnel(
    system_a: LipschitzDynamicalSystem, system_b: LipschitzDynamicalSystem, iso: LinearMap, maps: MapPair, eps: float
) -> CovariantTunnel:
    """Tunnel with pivot A and legs ``(id, iso)`` for a full quantum isometry ``iso: A -> B``."""
    t = Tunnel(system_a.seminorm, (LinearMap.identity(system_a.algebra), iso), (system_a, system_b))
    return CovariantTunnel(t, maps, eps)


def glued_metric(dx: np.ndarray, dy: np.ndarray, pairs: Sequence[tuple[int, int]], gap: float) -> np.ndarray:
    """Metric on ``X + Y`` with cross distances ``gap + min_(p,q) dX(x,p) + dY(q,y)``."""
    if not pairs:
        raise DomainError("gluing needs at least one pair")
    px = np.array([p for p, _ in pairs])
    qy = np.array([q for _, q in pairs])
    cross = gap + (dx[:, px][:, :, None] + dy[qy, :][None, :, :]).min(axis=1)
    nx, ny = dx.shape[0], dy.shape[0]
    out = np.zeros((nx + ny, nx + ny))
    out[:nx, :nx] = dx
    out[nx:, nx:] = dy
    out[:nx, nx:] = cross
    out[nx:, :nx] = cross.T
    return out


def metric_gluing_tunnel(
    system_a: LipschitzDynamicalSystem,
    system_b: LipschitzDynamicalSystem,
    pairs: Sequence[tuple[int, int]],
    gap: float,
    maps: MapPair | None = None,
    eps: float | None = None,
) -> Tunnel | CovariantTunnel:
    """Pivot ``C(X + Y)`` with a glued metric; legs are the two restrictions.

    Restrictions of a Lipschitz seminorm are quantum isometries (McShane
    extension), so the legs are exact. Raises DomainError if the glued
    matrix is not a metric (``2 * gap`` below the distortion of ``pairs``).
    """
    sa, sb = system_a.seminorm.metric, system_b.seminorm.metric
    if sa is None or sb is None:
        raise DomainError("metric gluing needs Lipschitz seminorms of metric spaces")
    dist = glued_metric(sa.dist, sb.dist, pairs, gap)
    labels = [("A", p) for p in sa.points] + [("B", p) for p in sb.points]
    space = FiniteMetricSpace(labels, dist)
    D, L = lipschitz_seminorm(space)
    na = len(sa)
    Pa = np.eye(len(space))[:na]
    Pb = np.eye(len(space))[na:]
    t = Tunnel(
        L,
        (LinearMap(D, system_a.algebra, Pa), LinearMap(D, system_b.algebra, Pb)),
        (system_a, system_b),
        meta={"kind": "metric-gluing", "gap": gap},
    )
    if maps is None:
        return t
    return CovariantTunnel(t, maps, CAP if eps is None else eps)


# ---------------------------------------------------------------------------
# estimator routing


def _route(t: Tunnel) -> str:
    if isinstance(t.minorant, DiagonalBound) and t.systems[0] is t.systems[1]:
        return "diagonal"
    if isinstance(t.minorant, HubBound):
        return "hub"
    D = t.pivot
    if not (D.commutative and all(s.algebra.commutative for s in t.systems)):
        return "net"
    if t.seminorm.metric is not None and all(_dirac_map(leg) is not None for leg in t.legs):
        return "metric"
    if t.seminorm.polyhedral or isinstance(t.minorant, LSeminorm):
        return "lp"
    return "net"


def _dirac_map(m: LinearMap) -> np.ndarray | None:
    """Index array ``i -> j`` when ``m`` pulls each point mass back to a point mass."""
    M = m.matrix
    if not np.all((np.abs(M) < 1e-12) | (np.abs(M - 1) < 1e-12)):
        return None
    if not np.all(np.abs(M).sum(axis=1) == 1):
        return None
    return np.abs(M).argmax(axis=1)


def _pulled_dirac(t: Tunnel, j: int, g, a: int) -> np.ndarray:
    """Pivot weights of ``delta_a o alpha^g o pi_j``."""
    sysj = t.systems[j]
    e = np.zeros(len(sysj.algebra.blocks))
    e[a] = 1.0
    return t.legs[j].pull_state(sysj.act(g).pull_state(e))


def _pull_matrix(t: Tunnel, k: int, h) -> np.ndarray:
    """``V`` with ``V psi`` = pivot weights of ``psi o beta^h o pi_k``."""
    sysk = t.systems[k]
    return t.legs[k].matrix.T @ sysk.act(h).matrix.T


def _ball_pairs(ct: CovariantTunnel, j: int, eps: float) -> list[tuple[Any, Any]]:
    sys_j = ct.systems[j]
    mapping = ct.maps.forward if j == 0 else ct.maps.backward
    out = []
    for g in sys_j.ball(1.0 / eps):
        if g not in mapping:
            raise DomainError(f"covariance map undefined at {g!r} inside the 1/eps ball")
        out.append((g, mapping[g]))
    return out


def _true_seminorm_value(t: Tunnel, C: np.ndarray) -> np.ndarray:
    return t.seminorm.eval_coords(np.atleast_2d(C))


# ---------------------------------------------------------------------------
# extent


def extent(t: Tunnel | CovariantTunnel, mesh: float = 0.25, seed: int = 0, budget: int = 20_000) -> Interval:
    """``max_j Haus(S(D), pi_j^*(S(A_j)))`` in the pivot's MK metric."""
    if isinstance(t, CovariantTunnel):
        t = t.tunnel
    route = _route(t)
    parts = [_extent_leg(t, j, route, mesh, seed, budget) for j in (0, 1)]
    out = parts[0].hull_max(parts[1])
    return Interval(out.lower, out.upper, out.lower_certified, out.upper_certified, out.slack, {"route": route})


def _extent_leg(t: Tunnel, j: int, route: str, mesh: float, seed: int, budget: int) -> Interval:
    if route == "metric":
        d = t.seminorm.metric.dist
        targets = _dirac_map(t.legs[j])
        val = float(d[:, targets].min(axis=1).max())
        return Interval(val, val, slack={"float": 1e-12})
    if route == "hub":
        return _hub_extent(t, j)
    if route == "diagonal":
        return _diagonal_extent(t)
    if route == "lp":
        return _lp_extent(t, j)
    return _net_extent(t, j, mesh, seed, budget)


def _mk_rows(t: Tunnel) -> tuple[np.ndarray, bool]:
    """Rows for the LP route and whether they describe the true seminorm."""
    if t.seminorm.polyhedral:
        return t.seminorm.rows(), True
    m = t.minorant
    if isinstance(m, LSeminorm):
        return m.rows(), False
    raise DomainError("LP route needs a polyhedral seminorm or minorant")


def _lp_extent(t: Tunnel, j: int) -> Interval:
    rows, exact = _mk_rows(t)
    P = t.legs[j].matrix  # (n_j, n_D)
    n_d = rows.shape[1]
    m = rows.shape[0]
    nj = P.shape[0]
    A_eq = sparse.hstack(
        [sparse.csr_matrix(rows.T), sparse.csr_matrix(-rows.T), sparse.csr_matrix(P.T)]
    ).tolil()
    A_eq = sparse.vstack([A_eq, sparse.hstack([sparse.csr_matrix((1, 2 * m)), np.ones((1, nj))])]).tocsr()
    cost = np.concatenate([np.ones(2 * m), np.zeros(nj)])
    best, low = 0.0, 0.0
    for x in range(n_d):
        b = np.zeros(n_d + 1)
        b[x] = 1.0
        b[-1] = 1.0
        res = _linprog(cost, A_eq=A_eq, b_eq=b, bounds=(0, None))
        best = max(best, float(res.fun))
        if not exact:
            low = max(low, _extent_probe(t, j, x, res.eqlin.marginals[:n_d]))
    if exact:
        return Interval(best, best + LP_SLACK, slack={"lp": LP_SLACK})
    return Interval(min(low, best), best + LP_SLACK, True, True, {"lp": LP_SLACK}, {"minorant": True})


def _extent_probe(t: Tunnel, j: int, x: int, c: np.ndarray) -> float:
    """Certified lower bound on ``inf_phi MK(delta_x, phi o pi_j)`` from a test element ``c``."""
    best = 0.0
    P = t.legs[j].matrix
    for cc in (c, -c):
        val = cc[x] - float((P @ cc).max())
        if val <= 0:
            continue
        lv = float(_true_seminorm_value(t, cc)[0])
        best = max(best, val / max(1.0, lv) if lv > 0 else val)
    return best


def hub_radius(system: LipschitzDynamicalSystem, hub: np.ndarray, mesh: float = 0.25, seed: int = 0) -> Interval:
    """``sup_phi MK(phi, hub)`` over all states of the system."""
    from .fuzzy_torus import FuzzyTorus, trace_radius_bound

    A, L = system.algebra, system.seminorm
    if isinstance(A, FuzzyTorus) and getattr(L, "length", None) is not None:
        if np.allclose(hub, A.unit_coords / A.N, atol=1e-12):
            # averaging phi over the dual action gives the trace
            up = trace_radius_bound(A.k, L.length)
            exact = not np.any(A.theta)
            return Interval(up if exact else 0.0, up, True, True, {}, {"hub": "trace", "exact": exact})
    if A.commutative and L.metric is not None:
        val = max(transport_distance(L.metric, np.eye(len(A.blocks))[i], hub) for i in range(len(A.blocks)))
        return Interval(val, val + LP_SLACK, slack={"lp": LP_SLACK})
    net = state_net(A, L, mesh, seed=seed)
    Q = L.complement_basis()
    worst = float(np.linalg.norm((net.coords - hub[None, :]) @ Q, axis=1).max()) * L.ball_radius()
    return Interval(0.0, worst + net.covering_radius, True, net.certified, {"net_covering": net.covering_radius})


def hub_drift(system: LipschitzDynamicalSystem, hub: np.ndarray, g) -> float:
    """Certified upper bound on ``MK(hub o alpha^g, hub)``."""
    moved = system.act(g).pull_state(hub)
    if np.allclose(moved, hub, atol=1e-12):
        return 0.0
    L = system.seminorm
    if system.algebra.commutative and L.metric is not None:
        return transport_distance(L.metric, moved, hub) + LP_SLACK
    Q = L.complement_basis()
    return float(np.linalg.norm((moved - hub) @ Q)) * L.ball_radius()


def _hub_radii(t: Tunnel) -> tuple[Interval, Interval]:
    if "hub_radii" not in t.meta:
        hb: HubBound = t.minorant
        t.meta["hub_radii"] = tuple(hub_radius(s, h) for s, h in zip(t.systems, hb.hubs))
    return t.meta["hub_radii"]


def _hub_extent(t: Tunnel, j: int) -> Interval:
    """States pulled back from the far leg cross the hub: ``gap + sup MK(psi, hub)``."""
    far = _hub_radii(t)[1 - j]
    up = t.minorant.gap + far.upper
    return Interval(0.0, up, True, far.upper_certified, dict(far.slack), {"hub": True})


def _diagonal_extent(t: Tunnel) -> Interval:
    """Extent equals ``gap``: ``(gap, 0)`` tests the lower end, ``||a - b|| <= gap`` the upper."""
    gap = t.minorant.gap
    c = np.concatenate([gap * t.systems[0].algebra.unit_coords, np.zeros(t.systems[1].algebra.dim)])
    lv = float(_true_seminorm_value(t, c)[0])
    return Interval(gap / max(1.0, lv), gap, True, True, {}, {"diagonal": True})


def _net_extent(t: Tunnel, j: int, mesh: float, seed: int, budget: int) -> Interval:
    L = t.seminorm
    D = t.pivot
    net_d = state_net(D, L, mesh, budget, seed)
    A = t.systems[j].algebra
    net_a = state_net(A, t.systems[j].seminorm, mesh, budget, seed + 1)
    pulled = t.legs[j].pull_state(net_a.coords)
    Q = L.complement_basis()
    radius = L.ball_radius()
    pq = pulled @ Q
    worst = 0.0
    for mu in net_d.coords @ Q:
        worst = max(worst, float(np.linalg.norm(mu[None, :] - pq, axis=1).min()) * radius)
    upper = worst + net_d.covering_radius
    return Interval(
        0.0,
        upper,
        True,
        net_d.certified,
        {"net_covering": net_d.covering_radius},
        {"net_sizes": [len(net_d), len(net_a)]},
    )


# ---------------------------------------------------------------------------
# reach


def cov_reach(ct: CovariantTunnel, eps: float | None = None, mesh: float = 0.25, seed: int = 0) -> Interval:
    """``eps``-reach: worst covariant state matching over the ``1/eps`` balls, both orientations."""
    eps = ct.eps if eps is None else eps
    if not eps > 0:
        raise DomainError("eps must be positive")
    t = ct.tunnel
    route = _route(t)
    parts = [_reach_orient(ct, j, eps, route, mesh, seed) for j in (0, 1)]
    out = parts[0].hull_max(parts[1])
    return Interval(out.lower, out.upper, out.lower_certified, out.upper_certified, out.slack, {"route": route})


def _reach_orient(ct: CovariantTunnel, j: int, eps: float, route: str, mesh: float, seed: int) -> Interval:
    t = ct.tunnel
    k = 1 - j
    pairs = _ball_pairs(ct, j, eps)
    if route == "metric":
        return _metric_reach(t, j, k, pairs)
    if route == "hub":
        return _hub_reach(t, j, k, pairs)
    if route == "diagonal":
        return _diagonal_reach(t, pairs)
    if route == "lp":
        return _lp_reach(t, j, k, pairs)
    return _net_reach(t, j, k, pairs, mesh, seed)


def _metric_reach(t: Tunnel, j: int, k: int, pairs) -> Interval:
    d = t.seminorm.metric.dist
    nj = len(t.systems[j].algebra.blocks)
    nk = len(t.systems[k].algebra.blocks)
    V = [_pull_matrix(t, k, h) for _, h in pairs]
    worst = 0.0
    for a in range(nj):
        # MK(point mass at x_g, V_g psi) = (d[x_g] @ V_g) . psi, linear in psi
        W = np.array([d[int(_pulled_dirac(t, j, g, a).argmax())] @ Vg for (g, _), Vg in zip(pairs, V)])
        c = np.zeros(nk + 1)
        c[-1] = 1.0
        A_ub = np.hstack([W, -np.ones((len(pairs), 1))])
        A_eq = np.concatenate([np.ones(nk), [0.0]])[None, :]
        res = _linprog(c, A_ub=A_ub, b_ub=np.zeros(len(pairs)), A_eq=A_eq, b_eq=[1.0],
                       bounds=[(0, None)] * nk + [(None, None)])
        worst = max(worst, float(res.fun))
    return Interval(max(worst - LP_SLACK, 0.0), worst + LP_SLACK, slack={"lp": LP_SLACK})


def _hub_reach(t: Tunnel, j: int, k: int, pairs) -> Interval:
    """Match every state with the far hub: ``gap + sup MK(phi, hub) + drift of the far hub``."""
    near = _hub_radii(t)[j]
    hub_k = t.minorant.hubs[k]
    drift = max((hub_drift(t.systems[k], hub_k, h) for h in {h for _, h in pairs}), default=0.0)
    up = t.minorant.gap + near.upper + drift
    return Interval(0.0, up, True, near.upper_certified, dict(near.slack), {"hub": True, "drift": drift})


def _diagonal_reach(t: Tunnel, pairs) -> Interval:
    if any(g != h for g, h in pairs):
        raise DomainError("diagonal bound needs identity covariance maps")
    return _diagonal_extent(t)


def _lp_reach(t: Tunnel, j: int, k: int, pairs) -> Interval:
    rows, exact = _mk_rows(t)
    m, n_d = rows.shape
    nj = len(t.systems[j].algebra.blocks)
    nk = len(t.systems[k].algebra.blocks)
    G = len(pairs)
    V = [_pull_matrix(t, k, h) for _, h in pairs]
    # variables: psi (nk), t, then y_g^+, y_g^- (2m each)
    nvar = nk + 1 + 2 * m * G
    cost = np.zeros(nvar)
    cost[nk] = 1.0
    RT = sparse.csr_matrix(rows.T)
    eq_blocks, ub_blocks = [], []
    for gi in range(G):
        blk = [None] * (2 + 2 * G)
        blk[0] = sparse.csr_matrix(V[gi])
        blk[1] = sparse.csr_matrix((n_d, 1))
        for gj in range(G):
            blk[2 + 2 * gj] = RT if gj == gi else sparse.csr_matrix((n_d, m))
            blk[3 + 2 * gj] = -RT if gj == gi else sparse.csr_matrix((n_d, m))
        eq_blocks.append(sparse.hstack(blk))
        ub = np.zeros((1, nvar))
        ub[0, nk] = -1.0
        ub[0, nk + 1 + 2 * m * gi : nk + 1 + 2 * m * (gi + 1)] = 1.0
        ub_blocks.append(sparse.csr_matrix(ub))
    simplex = np.zeros((1, nvar))
    simplex[0, :nk] = 1.0
    A_eq = sparse.vstack(eq_blocks + [sparse.csr_matrix(simplex)]).tocsr()
    A_ub = sparse.vstack(ub_blocks).tocsr()
    bounds = [(0, None)] * nk + [(None, None)] + [(0, None)] * (2 * m * G)
    worst, low = 0.0, 0.0
    for a in range(nj):
        b_eq = np.concatenate([_pulled_dirac(t, j, g, a) for g, _ in pairs] + [[1.0]])
        res = _linprog(cost, A_ub=A_ub, b_ub=np.zeros(G), A_eq=A_eq, b_eq=b_eq, bounds=bounds)
        worst = max(worst, float(res.fun))
        if not exact:
            lam = np.clip(-np.asarray(res.ineqlin.marginals), 0.0, None)
            if lam.sum() > 1.0:
                lam = lam / lam.sum()
            cs = np.asarray(res.eqlin.marginals[: n_d * G]).reshape(G, n_d)
            low = max(low, _lp_reach_probe(t, j, a, pairs, V, cs, lam))
    if exact:
        return Interval(max(worst - LP_SLACK, 0.0), worst + LP_SLACK, slack={"lp": LP_SLACK})
    return Interval(min(low, worst), worst + LP_SLACK, True, True, {"lp": LP_SLACK}, {"minorant": True})


def _lp_reach_probe(t: Tunnel, j: int, a: int, pairs, V, cs: np.ndarray, lam: np.ndarray) -> float:
    best = 0.0
    for sign in (1.0, -1.0):
        C = sign * cs
        u = np.array([_pulled_dirac(t, j, g, a) for g, _ in pairs])
        val = float((u * C).sum()) - float(sum(C[i] @ V[i] for i in range(len(pairs))).max())
        if val <= 0:
            continue
        lv = _true_seminorm_value(t, C)
        scale = 1.0
        for gi in range(len(pairs)):
            if lv[gi] > 1e-12:
                scale = max(scale, lv[gi] / lam[gi] if lam[gi] > 1e-15 else math.inf)
        if math.isfinite(scale):
            best = max(best, val / scale)
    return best


def _net_reach(t: Tunnel, j: int, k: int, pairs, mesh: float, seed: int) -> Interval:
    L = t.seminorm
    sys_j, sys_k = t.systems[j], t.systems[k]
    net_j = state_net(sys_j.algebra, sys_j.seminorm, mesh, seed=seed)
    net_k = state_net(sys_k.algebra, sys_k.seminorm, mesh, seed=seed + 1)
    moved_j = [t.legs[j].pull_state(sys_j.act(g).pull_state(net_j.coords)) for g, _ in pairs]
    moved_k = [t.legs[k].pull_state(sys_k.act(h).pull_state(net_k.coords)) for _, h in pairs]
    Q = L.complement_basis()
    radius = L.ball_radius()
    worst = 0.0
    for p in range(len(net_j)):
        gaps = np.max(
            [np.linalg.norm((mj[p][None, :] - mk) @ Q, axis=1) for mj, mk in zip(moved_j, moved_k)], axis=0
        )
        worst = max(worst, float(gaps.min()) * radius)
    dil = max(dilation(sys_j.act(g), sys_j.seminorm, sys_j.seminorm, samples=8, seed=seed).upper for g, _ in pairs)
    correction = dil * net_j.covering_radius
    return Interval(
        0.0,
        worst + correction,
        True,
        net_j.certified,
        {"net_covering": net_j.covering_radius, "dilation_correction": correction},
        {"net_sizes": [len(net_j), len(net_k)]},
    )


def magnitude(ct: CovariantTunnel, eps: float | None = None, mesh: float = 0.25, seed: int = 0) -> Interval:
    """Maximum of the extent and the ``eps``-reach."""
    ext = extent(ct, mesh, seed)
    reach = cov_reach(ct, eps, mesh, seed)
    out = ext.hull_max(reach)
    return Interval(
        out.lower, out.upper, out.lower_certified, out.upper_certified, out.slack,
        {"extent": ext.to_dict(), "reach": reach.to_dict()},
    )


# ---------------------------------------------------------------------------
# dilation


def dilation(pi: LinearMap, L_A: LSeminorm, L_B: LSeminorm, samples: int = 64, seed: int = 0) -> Interval:
    """Bracket ``sup{L_B(pi(a)) : L_A(a) <= 1}``.

    Exact by LP when both seminorms are polyhedral. Otherwise the lower end
    is the best sampled ratio and the upper end combines the Euclidean radius
    of the ``L_A`` ball with the top eigenvalue of the ``L_B`` Gram matrix.
    """
    if not pi.unital:
        raise DomainError("dilation needs a unital map")
    P = pi.matrix
    ra, rb = L_A.rows(), L_B.rows()
    if ra is not None and rb is not None:
        best = 0.0
        m, n = ra.shape
        A_ub = np.vstack([ra, -ra])
        for row in rb @ P:
            if np.allclose(row, 0.0):
                continue
            res = _linprog(-row, A_ub=A_ub, b_ub=np.ones(2 * m), bounds=[(None, None)] * n)
            best = max(best, -float(res.fun))
        return Interval(best, best + LP_SLACK, slack={"lp": LP_SLACK}, notes={"method": "lp"})
    rng = np.random.default_rng(seed)
    Q = L_A.complement_basis()
    C = rng.standard_normal((samples, Q.shape[1])) @ Q.T
    if 0 < samples and Q.shape[1] <= 64:
        C = np.vstack([C, Q.T])
    lower = 0.0
    for s in range(0, C.shape[0], 8):
        la = L_A.eval_coords(C[s : s + 8])
        lb = L_B.eval_coords(C[s : s + 8] @ P.T)
        ok = la > 1e-12
        lower = max(lower, float((lb[ok] / la[ok]).max(initial=0.0)))
    gram_top = float(np.linalg.eigvalsh(L_B.gram()).max())
    upper = L_A.ball_radius() * float(np.linalg.norm(P @ Q, 2)) * math.sqrt(max(gram_top, 0.0))
    return Interval(min(lower, upper), max(lower, upper), False, True, {}, {"method": "relaxation", "samples": samples})


# ---------------------------------------------------------------------------
# composition and target sets


def compose_tunnels(
    t1: CovariantTunnel, t2: CovariantTunnel, eps: float, check: bool = True, mesh: float = 0.25
) -> CovariantTunnel:
    """Glue ``t1: A -> B`` and ``t2: B -> C`` into an ``(eps1 + eps2)``-covariant tunnel ``A -> C``.

    Pivot ``D1 + D2`` with ``L(d1, d2) = max(L1(d1), L2(d2), ||rho_B(d1) - pi_B(d2)|| / eps)``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    A, B1 = t1.systems
    B2, C = t2.systems
    if B1 is not B2:
        raise DomainError("middle systems of the two tunnels differ")
    e1, e2 = t1.eps, t2.eps
    maps = compose_almost_iso(t1.maps, t2.maps, e1, e2, A.monoid, B1.monoid, C.monoid)
    L1, L2 = t1.tunnel.seminorm, t2.tunnel.seminorm
    D, p1, p2 = direct_sum(L1.algebra, L2.algebra)
    rho_b = t1.tunnel.legs[1]
    pi_b = t2.tunnel.legs[0]
    bridge = rho_b.matrix @ p1.matrix - pi_b.matrix @ p2.matrix
    groups = lift_seminorm_groups(L1, p1.matrix) + lift_seminorm_groups(L2, p2.matrix)
    groups += norm_group(B1.algebra, bridge, eps)
    L = LSeminorm(D, groups=groups, name="composite", check_kernel=True)
    legs = (
        LinearMap(D, A.algebra, t1.tunnel.legs[0].matrix @ p1.matrix),
        LinearMap(D, C.algebra, t2.tunnel.legs[1].matrix @ p2.matrix),
    )
    tunnel = Tunnel(L, legs, (A, C), None, {"kind": "composite", "gap": eps})
    out = CovariantTunnel(tunnel, maps, e1 + e2)
    if check:
        if not out.covariant():
            raise PropinqError("composed map pair fails the almost-isometry check")
        m = magnitude(out, e1 + e2, mesh).upper
        m1 = magnitude(t1, e1, mesh).upper
        m2 = magnitude(t2, e2, mesh).upper
        if m > m1 + m2 + eps + 1e-6:
            raise PropinqError(f"composite magnitude {m} exceeds {m1} + {m2} + {eps}")
        out.tunnel.meta["magnitudes"] = {"composite": m, "first": m1, "second": m2}
    return out


def target_set_sample(t: Tunnel | CovariantTunnel, a, l: float, leg: int = 0, tol: float = 1e-7, seed: int = 0):
    """An element of the ``l``-target set of ``a``: ``pi_other(d)`` with ``pi_leg(d) = a`` and ``L_D(d) <= l``."""
    if isinstance(t, CovariantTunnel):
        t = t.tunnel
    src = t.systems[leg]
    c = np.asarray(a, float) if isinstance(a, np.ndarray) and a.ndim == 1 else src.algebra.coords(a)
    la = float(src.seminorm.eval_coords(c)[0])
    if l < la - tol:
        raise DomainError(f"l = {l} is below L(a) = {la}")
    lift = t.meta.get("lift")
    starts = lift(leg, c)[None, :] if lift is not None else None
    val, d = quotient_seminorm(
        t.seminorm, t.legs[leg], c, seed=seed, good_enough=l + tol * max(1.0, l) / 2, starts=starts
    )
    if val > l + tol * max(1.0, l):
        raise PropinqError(f"fiber minimum {val} exceeds l = {l}")
    return t.legs[1 - leg].coords(d)


# ---------------------------------------------------------------------------
# propinquity upper bound


TunnelSource = CovariantTunnel | Callable[[float], CovariantTunnel]


def covariant_propinquity_upper(
    A: LipschitzDynamicalSystem,
    B: LipschitzDynamicalSystem,
    family: Sequence[TunnelSource],
    tol: float = 1e-3,
    mesh: float = 0.25,
    seed: int = 0,
) -> Interval:
    """Smallest ``eps`` with an ``eps``-covariant tunnel of magnitude at most ``eps``, capped at sqrt(2)/2.

    Each family member is a fixed covariant tunnel or a factory ``eps ->
    tunnel``. The search scans ``cap * 2^-j`` downward and bisects the last
    bracket to ``tol``.
    """
    if not family:
        raise DomainError("tunnel family is empty")
    log: list[dict] = []

    def feasible(eps: float, source) -> tuple[bool, bool]:
        try:
            ct = source(eps) if callable(source) else source
        except DomainError as exc:
            log.append({"eps": eps, "feasible": False, "reason": str(exc)})
            return False, True
        if ct.systems[0] is not A or ct.systems[1] is not B:
            raise DomainError("tunnel does not connect the two systems")
        if not ct.covariant(eps):
            log.append({"eps": eps, "feasible": False, "reason": "not eps-covariant"})
            return False, True
        m = magnitude(ct, eps, mesh, seed)
        ok = m.upper <= eps
        log.append({"eps": eps, "feasible": ok, "magnitude": m.upper})
        return ok, m.upper_certified

    best = CAP
    certified = True
    for source in family:
        ok, cert = feasible(CAP, source)
        if not ok:
            continue
        hi, hi_cert = CAP, cert
        lo = None
        e = CAP
        while e > tol:
            e /= 2.0
            ok, cert = feasible(e, source)
            if ok:
                hi, hi_cert = e, cert
            else:
                lo = e
                break
        if lo is not None:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                ok, cert = feasible(mid, source)
                if ok:
                    hi, hi_cert = mid, cert
                else:
                    lo = mid
        if hi < best:
            best, certified = hi, hi_cert
    return Interval(0.0, best, True, certified, {"bisection": tol}, {"cap": CAP, "log": log})
