# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the combinatorial kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

ctypedef cnp.int64_t idx_t

cdef enum:
    _FOUND = 1
    _EXHAUSTED = 0
    _BUDGET = -1

FOUND = _FOUND
EXHAUSTED = _EXHAUSTED
BUDGET = _BUDGET


def pair_defect(idx_t[:, :] mul_g, double[:, :] dist_g, idx_t[:] ball_g,
                idx_t[:, :] mul_h, double[:, :] dist_h, idx_t[:] ball_h,
                idx_t[:] sig, idx_t[:] kap):
    cdef Py_ssize_t ng = ball_g.shape[0], nh = ball_h.shape[0]
    cdef Py_ssize_t i, j, k
    cdef idx_t pg, ps
    cdef double worst = 0.0, v
    with nogil:
        for i in range(ng):
            for j in range(ng):
                pg = mul_g[ball_g[i], ball_g[j]]
                ps = mul_h[sig[i], sig[j]]
                for k in range(nh):
                    v = fabs(dist_h[ps, ball_h[k]] - dist_g[pg, kap[k]])
                    if v > worst:
                        worst = v
        for i in range(nh):
            for j in range(nh):
                pg = mul_h[ball_h[i], ball_h[j]]
                ps = mul_g[kap[i], kap[j]]
                for k in range(ng):
                    v = fabs(dist_g[ps, ball_g[k]] - dist_h[pg, sig[k]])
                    if v > worst:
                        worst = v
    return worst


cdef bint _consistent(idx_t[:, :] own_mul, double[:, :] own_dist, idx_t[:] own_ball, idx_t[:] own_map,
                      idx_t[:, :] oth_mul, double[:, :] oth_dist, idx_t[:] oth_ball, idx_t[:] oth_map,
                      Py_ssize_t a, idx_t c, double tol) noexcept nogil:
    cdef Py_ssize_t n_own = own_ball.shape[0], n_oth = oth_ball.shape[0]
    cdef Py_ssize_t b, h, h2
    cdef idx_t ga = own_ball[a], gb, sb, p1, q1, p2, q2, kh
    for b in range(n_own):
        sb = own_map[b]
        if sb < 0:
            continue
        gb = own_ball[b]
        p1 = oth_mul[c, sb]
        q1 = own_mul[ga, gb]
        p2 = oth_mul[sb, c]
        q2 = own_mul[gb, ga]
        for h in range(n_oth):
            kh = oth_map[h]
            if kh < 0:
                continue
            if fabs(oth_dist[p1, oth_ball[h]] - own_dist[q1, kh]) > tol:
                return False
            if fabs(oth_dist[p2, oth_ball[h]] - own_dist[q2, kh]) > tol:
                return False
    for h in range(n_oth):
        if oth_map[h] < 0:
            continue
        for h2 in range(n_oth):
            if oth_map[h2] < 0:
                continue
            if fabs(own_dist[own_mul[oth_map[h], oth_map[h2]], ga]
                    - oth_dist[oth_mul[oth_ball[h], oth_ball[h2]], c]) > tol:
                return False
    return True


def search_pair(idx_t[:, :] mul_g, double[:, :] dist_g, idx_t[:] ball_g,
                idx_t[:, :] mul_h, double[:, :] dist_h, idx_t[:] ball_h,
                idx_t[:] sig_ptr, idx_t[:] sig_cand, idx_t[:] kap_ptr, idx_t[:] kap_cand,
                idx_t[:] var_side, idx_t[:] var_pos, sig0, kap0,
                double tol, long long node_budget):
    sig_arr = np.array(sig0, dtype=np.int64)
    kap_arr = np.array(kap0, dtype=np.int64)
    cdef idx_t[:] sig = sig_arr
    cdef idx_t[:] kap = kap_arr
    cdef Py_ssize_t nvar = var_side.shape[0]
    if nvar == 0:
        ok = pair_defect(mul_g, dist_g, ball_g, mul_h, dist_h, ball_h, sig, kap) <= tol
        return (_FOUND if ok else _EXHAUSTED), sig_arr, kap_arr, 0
    choice_arr = np.full(nvar, -1, dtype=np.int64)
    cdef idx_t[:] choice = choice_arr
    cdef Py_ssize_t depth = 0, pos, start, stop, idx
    cdef idx_t side, value
    cdef long long nodes = 0
    cdef bint advanced, ok2
    cdef int status = _EXHAUSTED
    with nogil:
        while depth >= 0:
            side = var_side[depth]
            pos = var_pos[depth]
            if side == 0:
                sig[pos] = -1
                start = sig_ptr[pos]
                stop = sig_ptr[pos + 1]
            else:
                kap[pos] = -1
                start = kap_ptr[pos]
                stop = kap_ptr[pos + 1]
            advanced = False
            idx = choice[depth] + 1
            while start + idx < stop:
                nodes += 1
                if nodes > node_budget:
                    status = _BUDGET
                    break
                if side == 0:
                    value = sig_cand[start + idx]
                    sig[pos] = value
                    ok2 = _consistent(mul_g, dist_g, ball_g, sig, mul_h, dist_h, ball_h, kap, pos, value, tol)
                    if not ok2:
                        sig[pos] = -1
                else:
                    value = kap_cand[start + idx]
                    kap[pos] = value
                    ok2 = _consistent(mul_h, dist_h, ball_h, kap, mul_g, dist_g, ball_g, sig, pos, value, tol)
                    if not ok2:
                        kap[pos] = -1
                if ok2:
                    choice[depth] = idx
                    advanced = True
                    break
                idx += 1
            if status == _BUDGET:
                break
            if advanced:
                if depth == nvar - 1:
                    status = _FOUND
                    break
                depth += 1
                choice[depth] = -1
            else:
                choice[depth] = -1
                depth -= 1
    return status, sig_arr, kap_arr, nodes
