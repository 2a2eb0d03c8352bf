"""Time the compiled and pure-Python almost-isometry kernels on the same workloads.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from propinq import kernels
from propinq.monoid_metric import DualTorus, FiniteAbelianGroup, MapPair, almost_iso_defect, upsilon


def defect_workload():
    G, H = DualTorus((8, 8)), DualTorus((16, 16))
    r = 2.5
    rng = np.random.default_rng(0)
    hs, gs = H.ball(r + 1), G.ball(r + 1)
    fwd = {g: hs[int(rng.integers(len(hs)))] for g in G.ball(r)}
    bwd = {h: gs[int(rng.integers(len(gs)))] for h in H.ball(r)}
    fwd[G.identity], bwd[H.identity] = H.identity, G.identity
    p = MapPair(fwd, bwd, r)
    return lambda: almost_iso_defect(p, G, H, r)


def search_workload(G, H):
    return lambda: upsilon(G, H, tol=1e-3)


WORKLOADS = {
    "defect T(8,8)->T(16,16) r=2.5": defect_workload(),
    "upsilon Z3 vs Z4": search_workload(FiniteAbelianGroup([3]), FiniteAbelianGroup([4])),
    "upsilon T(4,4) vs T(8,8)": search_workload(DualTorus((4, 4)), DualTorus((8, 8))),
    "upsilon T(3,3) vs T(6,6)": search_workload(DualTorus((3, 3)), DualTorus((6, 6))),
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'workload':34s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in WORKLOADS.items():
        with kernels.use("python"):
            slow = best_time(fn, args.repeat)
        with kernels.use("cython"):
            fast = best_time(fn, args.repeat)
        print(f"{name:34s} {slow:10.4f} {fast:10.4f} {slow / fast:8.1f}")


if __name__ == "__main__":
    main()
