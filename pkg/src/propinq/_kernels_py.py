"""Pure-Python/numpy versions of the combinatorial kernels.

Both kernels work on integer-indexed "frames" of a monoid: a universe of
elements, a multiplication table ``mul`` over the first ``m`` universe
indices, a distance matrix ``dist`` over the whole universe, and the indices
``ball`` of the closed ball that forms the domain of a map. A map from the
ball of one side is an array of universe indices of the other side.
"""

from __future__ import annotations

import numpy as np

FOUND = 1
EXHAUSTED = 0
BUDGET = -1


def pair_defect(mul_g, dist_g, ball_g, mul_h, dist_h, ball_h, sig, kap) -> float:
    """Smallest eps for which the pair ``(sig, kap)`` meets the almost-isometry bound."""
    prod_g = mul_g[np.ix_(ball_g, ball_g)]
    prod_sig = mul_h[np.ix_(sig, sig)]
    forward = np.abs(
        dist_h[prod_sig[:, :, None], ball_h[None, None, :]]
        - dist_g[prod_g[:, :, None], kap[None, None, :]]
    )
    prod_h = mul_h[np.ix_(ball_h, ball_h)]
    prod_kap = mul_g[np.ix_(kap, kap)]
    backward = np.abs(
        dist_g[prod_kap[:, :, None], ball_g[None, None, :]]
        - dist_h[prod_h[:, :, None], sig[None, None, :]]
    )
    return float(max(forward.max(initial=0.0), backward.max(initial=0.0)))


def _consistent(own_mul, own_dist, own_ball, own_map, oth_mul, oth_dist, oth_ball, oth_map, a, c, tol):
    # own_map[a] = c was just set; check every fully-assigned constraint touching it
    own_done = np.flatnonzero(own_map >= 0)
    oth_done = np.flatnonzero(oth_map >= 0)
    if oth_done.size:
        ga = own_ball[a]
        gb = own_ball[own_done]
        sb = own_map[own_done]
        hb = oth_ball[oth_done]
        kh = oth_map[oth_done]
        left = oth_dist[oth_mul[c, sb][:, None], hb[None, :]]
        right = own_dist[own_mul[ga, gb][:, None], kh[None, :]]
        if np.any(np.abs(left - right) > tol):
            return False
        left = oth_dist[oth_mul[sb, c][:, None], hb[None, :]]
        right = own_dist[own_mul[gb, ga][:, None], kh[None, :]]
        if np.any(np.abs(left - right) > tol):
            return False
        left = own_dist[own_mul[np.ix_(kh, kh)], ga]
        right = oth_dist[oth_mul[np.ix_(hb, hb)], c]
        if np.any(np.abs(left - right) > tol):
            return False
    return True


def search_pair(
    mul_g, dist_g, ball_g, mul_h, dist_h, ball_h,
    sig_ptr, sig_cand, kap_ptr, kap_cand,
    var_side, var_pos, sig0, kap0, tol, node_budget,
):
    """Depth-first search for a pair with defect at most ``tol``.

    Variables are visited in the order ``(var_side[i], var_pos[i])``; side 0
    is the forward map on ``ball_g``, side 1 the backward map on ``ball_h``.
    Candidates for each ball position are the CSR slices of ``*_cand``.
    Returns ``(status, sig, kap, nodes)``.
    """
    sig = np.array(sig0, dtype=np.int64)
    kap = np.array(kap0, dtype=np.int64)
    nvar = len(var_side)
    nodes = 0
    if nvar == 0:
        ok = pair_defect(mul_g, dist_g, ball_g, mul_h, dist_h, ball_h, sig, kap) <= tol
        return (FOUND if ok else EXHAUSTED), sig, kap, 0
    choice = np.full(nvar, -1, dtype=np.int64)
    depth = 0
    while depth >= 0:
        side = var_side[depth]
        pos = var_pos[depth]
        if side == 0:
            ptr, cand, own_map = sig_ptr, sig_cand, sig
        else:
            ptr, cand, own_map = kap_ptr, kap_cand, kap
        own_map[pos] = -1
        start = ptr[pos]
        stop = ptr[pos + 1]
        advanced = False
        idx = choice[depth] + 1
        while start + idx < stop:
            value = cand[start + idx]
            nodes += 1
            if nodes > node_budget:
                return BUDGET, sig, kap, nodes
            own_map[pos] = value
            if side == 0:
                ok = _consistent(mul_g, dist_g, ball_g, sig, mul_h, dist_h, ball_h, kap, pos, value, tol)
            else:
                ok = _consistent(mul_h, dist_h, ball_h, kap, mul_g, dist_g, ball_g, sig, pos, value, tol)
            if ok:
                choice[depth] = idx
                advanced = True
                break
            own_map[pos] = -1
            idx += 1
        if advanced:
            if depth == nvar - 1:
                return FOUND, sig, kap, nodes
            depth += 1
            choice[depth] = -1
        else:
            choice[depth] = -1
            depth -= 1
    return EXHAUSTED, sig, kap, nodes
