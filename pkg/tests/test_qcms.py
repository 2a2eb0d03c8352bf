import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propinq.errors import DomainError
from propinq.metric_core import FiniteMetricSpace
from propinq.qcms import (
    FiniteCStarAlgebra,
    LinearMap,
    State,
    check_quantum_isometry,
    check_quasi_leibniz,
    commutative_algebra,
    lipschitz_seminorm,
    mk_distance,
    polyhedral_seminorm,
    quotient_seminorm,
    state_net,
    transport_distance,
)


def line_system(*xs):
    X = FiniteMetricSpace.on_line(xs)
    A, L = lipschitz_seminorm(X)
    return X, A, L


def test_lipschitz_two_points():
    _, A, L = line_system(0, 2)
    assert L(A.element(np.array([0.0, 2.0]))) == pytest.approx(1.0)
    assert L(A.unit()) == 0


def test_lip_kernel_is_scalars():
    _, A, L = line_system(0, 1, 3)
    assert L.eval_coords(5 * A.unit_coords[None])[0] == pytest.approx(0, abs=1e-12)
    assert L.eval_coords(np.array([[0.0, 1.0, 0.0]]))[0] > 0


def test_mk_on_a_line():
    _, A, L = line_system(0, 1, 2)
    d = mk_distance(A, L, State.dirac(A, 0), State.dirac(A, 2))
    assert d.lower == pytest.approx(2.0) and d.upper == pytest.approx(2.0)
    assert mk_distance(A, L, State.dirac(A, 1), State.dirac(A, 1)).upper == 0


def test_mk_tracial_vs_dirac():
    _, A, L = line_system(0, 1, 2)
    d = mk_distance(A, L, State.tracial(A), State.dirac(A, 0))
    assert d.lower == pytest.approx(1.0)


weights = st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4).map(lambda w: np.array(w) / sum(w))


@given(weights, weights, weights)
def test_mk_is_a_metric(u, v, w):
    _, A, L = line_system(0, 0.5, 2, 2.25)
    d = {}
    for (a, x), (b, y) in itertools.product(enumerate((u, v, w)), repeat=2):
        d[a, b] = mk_distance(A, L, State.from_weights(A, x), State.from_weights(A, y)).upper
    for a, b in d:
        assert d[a, b] == pytest.approx(d[b, a], abs=1e-9)
    for a, b, c in itertools.product(range(3), repeat=3):
        assert d[a, c] <= d[a, b] + d[b, c] + 1e-9


@given(weights, weights)
def test_transport_and_lp_agree(u, v):
    X, A, L = line_system(0, 1, 1.5, 4)
    lp = mk_distance(A, L, u, v, method="lp").upper
    assert lp == pytest.approx(transport_distance(X, u, v), abs=1e-8)
    gen = mk_distance(A, L, u, v, method="general", restarts=8, iterations=300)
    assert gen.lower - 1e-7 <= lp <= gen.upper + 1e-7


def test_mk_rejects_unknown_method():
    _, A, L = line_system(0, 1)
    with pytest.raises(DomainError):
        mk_distance(A, L, State.dirac(A, 0), State.dirac(A, 1), method="magic")


def test_state_validation():
    A = commutative_algebra(2)
    with pytest.raises(DomainError):
        State.from_weights(A, [0.7, 0.7])
    with pytest.raises(DomainError):
        State.from_weights(A, [1.5, -0.5])


def test_tracial_state_is_tracial():
    A = FiniteCStarAlgebra([2, 3])
    tau = State.tracial(A)
    rng = np.random.default_rng(4)
    for _ in range(10):
        a, b = A.random_sa(rng), A.random_sa(rng)
        assert tau.value(A.mul(a, b)) == pytest.approx(tau.value(A.mul(b, a)), abs=1e-12)
    assert tau(A.unit()) == pytest.approx(1.0)


def test_state_net_on_two_points():
    _, A, L = line_system(0, 1)
    net = state_net(A, L, 0.5)
    assert len(net) == 3
    assert net.certified


def test_state_net_covering_radius_holds():
    _, A, L = line_system(0, 1, 3)
    net = state_net(A, L, 0.25)
    rng = np.random.default_rng(0)
    for _ in range(30):
        w = rng.dirichlet(np.ones(3))
        gap = min(mk_distance(A, L, w, c).upper for c in net.coords)
        assert gap <= net.covering_radius + 1e-9


def test_quasi_leibniz_for_lipschitz():
    _, A, L = line_system(0, 0.3, 1, 1.7)
    report = check_quasi_leibniz(L, sample_count=100)
    assert report["violations"] == 0


def restriction(big, small_idx):
    A, L = big
    B = commutative_algebra(len(small_idx))
    P = np.zeros((len(small_idx), A.dim))
    P[np.arange(len(small_idx)), small_idx] = 1.0
    return B, LinearMap(A, B, P)


def test_restriction_is_a_quantum_isometry():
    X = FiniteMetricSpace.on_line([0, 1, 2.5, 4])
    A, L = lipschitz_seminorm(X)
    Y = FiniteMetricSpace.on_line([0, 2.5, 4])
    _, LY = lipschitz_seminorm(Y)
    B, pi = restriction((A, L), [0, 2, 3])
    report = check_quantum_isometry(pi, L, LY)
    assert report["ok"] and report["exact"]


def test_quotient_of_rough_seminorm_is_not_an_isometry():
    X = FiniteMetricSpace.on_line([0, 1, 2])
    A, L = lipschitz_seminorm(X)
    rough = polyhedral_seminorm(A, np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [2.0, 0.0, -2.0]]))
    _, LY = lipschitz_seminorm(FiniteMetricSpace.on_line([0, 2]))
    _, pi = restriction((A, rough), [0, 2])
    assert not check_quantum_isometry(pi, rough, LY)["ok"]
    q, d = quotient_seminorm(rough, pi, np.array([0.0, 2.0]))
    assert q == pytest.approx(4.0)  # the long row dominates any interpolation
    assert np.allclose(pi.coords(d), [0.0, 2.0])


def test_quotient_rejects_targets_outside_the_image():
    A = commutative_algebra(2)
    L = polyhedral_seminorm(A, np.array([[1.0, -1.0]]))
    pi = LinearMap(A, A, np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DomainError):
        quotient_seminorm(L, pi, np.array([0.0, 1.0]))
