import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propinq import kernels
from propinq.monoid_metric import (
    DualTorus,
    FiniteAbelianGroup,
    MapPair,
    almost_iso_defect,
    upsilon,
    upsilon_feasible,
)

pytest.importorskip("propinq._kernels")


def random_pair(rng):
    G = FiniteAbelianGroup([int(rng.integers(2, 6))], scale=float(rng.uniform(0.2, 1)))
    H = FiniteAbelianGroup([int(rng.integers(2, 6)), 2], scale=float(rng.uniform(0.1, 0.5)))
    r = float(rng.uniform(0.5, 3))
    gs, hs = G.elements(), H.elements()
    fwd = {g: hs[int(rng.integers(len(hs)))] for g in G.ball(r)}
    bwd = {h: gs[int(rng.integers(len(gs)))] for h in H.ball(r)}
    fwd[G.identity], bwd[H.identity] = H.identity, G.identity
    return G, H, MapPair(fwd, bwd, r), r


@given(st.integers(0, 2**32 - 1))
def test_defect_backends_agree(seed):
    G, H, p, r = random_pair(np.random.default_rng(seed))
    with kernels.use("python"):
        slow = almost_iso_defect(p, G, H, r)
    with kernels.use("cython"):
        fast = almost_iso_defect(p, G, H, r)
    assert slow == pytest.approx(fast, abs=1e-14)


@pytest.mark.parametrize(
    "G, H",
    [
        (FiniteAbelianGroup([3]), FiniteAbelianGroup([4])),
        (FiniteAbelianGroup([2, 2]), FiniteAbelianGroup([4])),
        (DualTorus((4,)), DualTorus((8,))),
        (DualTorus((3, 3)), DualTorus((6, 6))),
    ],
)
@pytest.mark.parametrize("eps", [0.2, 0.35, 0.5, 0.7])
def test_search_backends_agree(G, H, eps):
    with kernels.use("python"):
        slow = upsilon_feasible(G, H, eps)
    with kernels.use("cython"):
        fast = upsilon_feasible(G, H, eps)
    assert (slow.status, slow.nodes) == (fast.status, fast.nodes)
    if slow.witness is not None:
        assert slow.witness == fast.witness


def test_upsilon_backends_agree():
    G, H = DualTorus((4, 4)), DualTorus((8, 8))
    with kernels.use("python"):
        slow = upsilon(G, H)
    with kernels.use("cython"):
        fast = upsilon(G, H)
    assert (slow.lower, slow.upper) == (fast.lower, fast.upper)


def test_use_restores_backend():
    before = kernels.pair_defect
    with kernels.use("python"):
        assert kernels.BACKEND == "python"
    assert kernels.pair_defect is before
    with pytest.raises(ValueError):
        with kernels.use("fortran"):
            pass
