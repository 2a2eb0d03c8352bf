import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propinq.errors import DomainError
from propinq.metric_core import FiniteMetricSpace
from propinq.monoid_metric import CAP, FiniteAbelianGroup, MapPair
from propinq.qcms import LinearMap
from propinq.tunnels import (
    compose_tunnels,
    covariant_propinquity_upper,
    dilation,
    extent,
    glued_metric,
    group_system,
    identity_tunnel,
    isometry_tunnel,
    magnitude,
    metric_gluing_tunnel,
    metric_system,
    target_set_sample,
)


@pytest.fixture(scope="module")
def z4():
    return group_system(FiniteAbelianGroup([4]))


@pytest.fixture(scope="module")
def line3():
    return metric_system(FiniteMetricSpace.on_line([0, 1, 3]))


def diagonal(system, gap):
    n = system.algebra.dim
    return metric_gluing_tunnel(system, system, [(i, i) for i in range(n)], gap,
                                MapPair.identity(system.monoid, 1 / gap), gap)


def test_identity_tunnel_has_zero_extent(z4):
    ct = identity_tunnel(z4)
    assert extent(ct).upper <= 1e-9
    assert magnitude(ct).upper <= 1e-6
    assert ct.validate()["ok"]


@pytest.mark.parametrize("gap", [0.05, 0.3, 0.7])
def test_diagonal_gluing_extent_is_the_gap(line3, gap):
    ct = diagonal(line3, gap)
    e = extent(ct)
    assert e.lower == pytest.approx(gap) and e.upper == pytest.approx(gap)


def test_extent_and_magnitude_are_reversal_symmetric(line3):
    X = FiniteMetricSpace.on_line([0, 2])
    other = metric_system(X)
    ct = metric_gluing_tunnel(line3, other, [(0, 0), (2, 1)], 0.6, MapPair.identity(line3.monoid, 3), 0.6)
    a, b = extent(ct), extent(ct.reversed())
    assert (a.lower, a.upper) == pytest.approx((b.lower, b.upper))
    ma, mb = magnitude(ct), magnitude(ct.reversed())
    assert ma.upper == pytest.approx(mb.upper)


def test_glued_metric_needs_pairs_and_enough_gap():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(DomainError):
        glued_metric(d, d, [], 0.5)
    system = metric_system(FiniteMetricSpace.on_line([0, 1]))
    with pytest.raises(DomainError):
        # a zero gap puts paired points at distance zero
        metric_gluing_tunnel(system, system, [(0, 0), (1, 1)], 0.0)


def test_gluing_legs_are_quantum_isometries(line3):
    assert diagonal(line3, 0.2).tunnel.validate()["ok"]


def test_target_set_of_identity_tunnel(z4):
    ct = identity_tunnel(z4)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = z4.algebra.random_coords(rng, 1)[0]
        la = float(z4.seminorm.eval_coords(a)[0])
        np.testing.assert_allclose(target_set_sample(ct, a, la), a, atol=1e-9)


def test_target_set_of_unit_at_zero(line3):
    ct = diagonal(line3, 0.3)
    unit = line3.algebra.unit_coords
    np.testing.assert_allclose(target_set_sample(ct, unit, 0.0), unit, atol=1e-9)


def test_target_set_below_lipschitz_constant_is_refused(line3):
    ct = diagonal(line3, 0.3)
    with pytest.raises(DomainError):
        target_set_sample(ct, np.array([0.0, 1.0, 0.0]), 0.5)


@given(st.integers(0, 10_000), st.floats(0.05, 0.6))
def test_target_set_norm_bound(seed, gap):
    system = metric_system(FiniteMetricSpace.on_line([0, 0.5, 2]))
    ct = diagonal(system, gap)
    rng = np.random.default_rng(seed)
    a, a2 = rng.standard_normal(3), rng.standard_normal(3)
    l = float(max(system.seminorm.eval_coords(np.vstack([a, a2]))))
    b, b2 = target_set_sample(ct, a, l), target_set_sample(ct, a2, l)
    ext = extent(ct).upper
    assert np.abs(b - b2).max() <= np.abs(a - a2).max() + 2 * l * ext + 1e-7


def test_composition_bound(line3):
    t1, t2 = diagonal(line3, 0.2), diagonal(line3, 0.25)
    out = compose_tunnels(t1, t2, 0.1)
    mags = out.tunnel.meta["magnitudes"]
    assert mags["composite"] <= mags["first"] + mags["second"] + 0.1 + 1e-6
    assert out.eps == pytest.approx(0.45)


def test_composition_needs_a_shared_middle(line3, z4):
    with pytest.raises(DomainError):
        compose_tunnels(diagonal(line3, 0.2), identity_tunnel(z4), 0.1)


def test_isometry_tunnel_through_a_relabelling():
    X = FiniteMetricSpace.on_line([0, 1, 3])
    Y = FiniteMetricSpace([0, 1, 2], X.dist[::-1, ::-1])
    A, B = metric_system(X), metric_system(Y)
    flip = LinearMap(A.algebra, B.algebra, np.eye(3)[::-1])
    ct = isometry_tunnel(A, B, flip, MapPair.identity(A.monoid, 2), 0.5)
    assert ct.validate()["ok"]
    assert extent(ct).upper <= 1e-9
    assert dilation(flip, A.seminorm, B.seminorm).upper == pytest.approx(1.0, abs=1e-7)


def test_propinquity_of_identical_systems_is_small(z4):
    out = covariant_propinquity_upper(z4, z4, [identity_tunnel(z4)])
    assert out.upper <= 1e-3


def test_propinquity_is_capped(line3):
    far = metric_system(FiniteMetricSpace.on_line([0, 50]))
    factory = lambda e: metric_gluing_tunnel(line3, far, [(0, 0)], 50.0, MapPair.identity(line3.monoid, 1 / e), e)
    out = covariant_propinquity_upper(line3, far, [factory])
    assert out.upper == pytest.approx(CAP)


def test_propinquity_needs_a_family(z4):
    with pytest.raises(DomainError):
        covariant_propinquity_upper(z4, z4, [])
