import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propinq.errors import DomainError, ResourceError
from propinq.monoid_metric import (
    CAP,
    DualTorus,
    FiniteAbelianGroup,
    FiniteMonoid,
    MapPair,
    NaturalMonoid,
    almost_iso_defect,
    check_almost_iso,
    check_near_iso,
    compose_almost_iso,
    find_isometric_isomorphism,
    near_iso_defect,
    parse_monoid,
    unitize_near_iso,
    upsilon,
    upsilon_feasible,
)

Z2 = FiniteAbelianGroup([2], metric="discrete", scale=1.0)
TRIVIAL = parse_monoid("trivial")


def test_parse_monoid_names():
    assert parse_monoid("cyclic:3").orders == (3,)
    assert parse_monoid("abelian:2,2").orders == (2, 2)
    assert parse_monoid("dual-torus:4,4").k == (4, 4)
    assert parse_monoid({"name": "natural:2", "scale": 0.25}).scale == 0.25
    table = parse_monoid({"table": [[0, 1], [1, 0]], "dist": [[0, 1], [1, 0]]})
    assert table.multiply(1, 1) == 0
    with pytest.raises(DomainError):
        parse_monoid("banana:3")


def test_finite_monoid_validation():
    with pytest.raises(DomainError):
        FiniteMonoid([[0, 1, 2], [1, 2, 0], [2, 0, 1]], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    with pytest.raises(DomainError):
        FiniteMonoid([[0, 1], [1, 1]], [[0, 1], [1, 0]])
    FiniteMonoid([[0, 1], [1, 0]], [[0, 1], [1, 0]])


def test_balls_are_sorted_and_budgeted():
    N = NaturalMonoid(1, 0.5)
    assert N.ball(1.0) == [(0,), (1,), (2,)]
    N.max_ball = 10
    with pytest.raises(ResourceError):
        N.ball(100.0)


def test_dual_torus_metric_is_invariant():
    G = DualTorus((4, 6))
    els = G.elements()
    D = G.dist_matrix(els, els)
    np.testing.assert_array_equal(D, D.T)
    g = (1, 5)
    shifted = [G.multiply(g, x) for x in els]
    np.testing.assert_allclose(G.dist_matrix(shifted, shifted), D, atol=1e-12)


def test_nearest_prefers_smallest_angle_on_ties():
    G, H = DualTorus((8,)), DualTorus((4,))
    # exp(i pi / 4) sits halfway between the 4th roots 1 and i
    assert H.nearest(G.torus_point((1,))) == (0,)
    assert H.nearest(G.torus_point((3,))) == (1,)


def test_almost_iso_examples():
    G = FiniteAbelianGroup([3])
    assert check_almost_iso(MapPair.identity(G, 2.0), G, G, 0.0, 2.0)
    H = FiniteAbelianGroup([5])
    r = math.sqrt(3) / 3
    assert check_almost_iso(MapPair.constant(G, H, r), G, H, math.sqrt(3), r)
    assert not check_almost_iso(MapPair.constant(Z2, TRIVIAL, 2.0), Z2, TRIVIAL, 0.5, 2.0)


def test_almost_iso_domain_error():
    G = FiniteAbelianGroup([4])
    with pytest.raises(DomainError):
        almost_iso_defect(MapPair({(0,): (0,)}, {(0,): (0,)}), G, G, 1.0)


def test_near_iso_examples():
    G = FiniteAbelianGroup([4])
    assert check_near_iso(MapPair.identity(G, 3.0), G, G, 0.0, 3.0, unital=True)


def test_unitize_leaves_unital_pairs_alone():
    G = FiniteAbelianGroup([3])
    p = MapPair.identity(G, 2.0)
    assert unitize_near_iso(p, G, G) == p


def test_unitize_at_most_doubles_the_near_defect():
    G = FiniteAbelianGroup([6], scale=0.1)
    fwd = {g: g for g in G.elements()}
    fwd[G.identity] = (1,)
    p = MapPair(fwd, {g: g for g in G.elements()}, 5.0)
    before = near_iso_defect(p, G, G, 5.0)
    q = unitize_near_iso(p, G, G)
    assert q.is_unital(G, G)
    assert before > 0
    assert near_iso_defect(q, G, G, 5.0) <= 2 * before


def test_compose_examples():
    # both groups have diameter 0.5, so constant maps are 0.5-almost isometries
    G, H = FiniteAbelianGroup([3], scale=0.5), FiniteAbelianGroup([4], scale=0.25)
    p = MapPair.constant(G, H, 2.0)
    q = MapPair.constant(H, G, 2.0)
    assert check_almost_iso(p, G, H, 0.5, 2.0)
    comp = compose_almost_iso(p, q, 0.5, 0.5, G, H, G)
    assert check_almost_iso(comp, G, G, 1.0, 1.0)
    ident = MapPair.identity(H, 10.0)
    comp = compose_almost_iso(p, ident, 0.5, 0.1, G, H, H)
    assert check_almost_iso(comp, G, H, 0.6, 1 / 0.6)
    with pytest.raises(DomainError):
        compose_almost_iso(p, q, 0.9, 0.5, G, H, G)


@given(st.integers(2, 6), st.integers(2, 6), st.integers(2, 6), st.floats(0.2, CAP), st.floats(0.2, CAP))
def test_composition_lemma_on_cyclic_groups(a, b, c, e1, e2):
    G1, G2, G3 = (FiniteAbelianGroup([n]) for n in (a, b, c))

    def scaled(G, H, r):
        f = {g: (round(g[0] * H.orders[0] / G.orders[0]) % H.orders[0],) for g in G.ball(r)}
        return f

    p1 = MapPair(scaled(G1, G2, 1 / e1), scaled(G2, G1, 1 / e1), 1 / e1)
    p2 = MapPair(scaled(G2, G3, 1 / e2), scaled(G3, G2, 1 / e2), 1 / e2)
    d1, d2 = almost_iso_defect(p1, G1, G2, 1 / e1), almost_iso_defect(p2, G2, G3, 1 / e2)
    if d1 > e1 or d2 > e2:
        return
    comp = compose_almost_iso(p1, p2, e1, e2, G1, G2, G3)
    assert check_almost_iso(comp, G1, G3, e1 + e2, 1 / (e1 + e2))


def test_upsilon_oracles():
    G = FiniteAbelianGroup([4])
    u = upsilon(G, G)
    assert u.lower == 0 and u.upper <= 1e-3
    u = upsilon(Z2, TRIVIAL)
    assert u.upper == pytest.approx(CAP) and u.upper - u.lower <= 1e-3 and u.lower_certified


def test_upsilon_z3_z4_frozen():
    # frozen from an exhaustive run; both groups carry word metrics of diameter 1
    u = upsilon(FiniteAbelianGroup([3]), FiniteAbelianGroup([4]))
    assert u.lower_certified
    assert u.upper == pytest.approx(0.7071067811865476)
    assert u.lower == pytest.approx(0.7064162472205451)


def test_upsilon_feasible_examples():
    assert upsilon_feasible(Z2, TRIVIAL, 0.9).status == "infeasible"
    assert upsilon_feasible(Z2, TRIVIAL, 1.1).status == "feasible"
    G = FiniteAbelianGroup([5])
    assert upsilon_feasible(G, G, 0.05).status == "feasible"


def test_upsilon_symmetry_and_witness_orientation():
    G, H = FiniteAbelianGroup([2, 2]), FiniteAbelianGroup([2])
    a, b = upsilon(G, H), upsilon(H, G)
    assert (a.lower, a.upper) == (b.lower, b.upper)
    if "witness" in a.notes:
        w = a.notes["witness"]
        assert check_almost_iso(MapPair(w["forward"], w["backward"]), G, H, a.upper, 1 / a.upper)


def test_upsilon_resource_error_carries_radius():
    N1, N2 = NaturalMonoid(1, 0.01), NaturalMonoid(2, 0.01)
    N1.max_ball = N2.max_ball = 50
    with pytest.raises(ResourceError) as exc:
        upsilon(N1, N2)
    assert hasattr(exc.value, "completed")


def test_isomorphism_search():
    assert find_isometric_isomorphism(FiniteAbelianGroup([2]), Z2) is not None
    assert find_isometric_isomorphism(FiniteAbelianGroup([4]), FiniteAbelianGroup([2, 2])) is None
