"""Numba kernels for sampling, enumeration and interface tracing.

All graph structure comes in as flat arrays; see ``fk_sampler.SamplerTables``.
Union-find is over raw vertex ids with path halving.  Per-rhombus corner
slots are ordered [ (u,w), (u,w_z), (u_z,w), (u_z,w_z) ]; the loop strands
pair slot s with s^2 when the edge is open (around each dual vertex) and
with s^1 when closed (around each primal vertex).
"""

import numpy as np
from numba import njit

SQRT2 = np.sqrt(2.0)


@njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, inline="always")
def _union(parent, a, b):
    ra, rb = _find(parent, a), _find(parent, b)
    if ra != rb:
        parent[ra] = rb


@njit(cache=True)
def _rebuild_primal(parent, n, open_state, e_u1, e_u2, pre_pairs):
    for i in range(n):
        parent[i] = i
    for i in range(pre_pairs.shape[0]):
        _union(parent, pre_pairs[i, 0], pre_pairs[i, 1])
    for e in range(open_state.shape[0]):
        if open_state[e]:
            _union(parent, e_u1[e], e_u2[e])


@njit(cache=True)
def _rebuild_dual(parent, n, open_state, e_w1, e_w2, pre_pairs):
    for i in range(n):
        parent[i] = i
    for i in range(pre_pairs.shape[0]):
        _union(parent, pre_pairs[i, 0], pre_pairs[i, 1])
    for e in range(open_state.shape[0]):
        if not open_state[e]:
            _union(parent, e_w1[e], e_w2[e])


@njit(cache=True)
def _connected_excluding(parent_tmp, n, open_state, ea, eb, pre_pairs,
                         skip_edge, want_open, a, b):
    """Scratch connectivity among edges with state ``want_open``, skipping one."""
    for i in range(n):
        parent_tmp[i] = i
    for i in range(pre_pairs.shape[0]):
        _union(parent_tmp, pre_pairs[i, 0], pre_pairs[i, 1])
    for e in range(open_state.shape[0]):
        if e != skip_edge and open_state[e] == want_open:
            _union(parent_tmp, ea[e], eb[e])
    return _find(parent_tmp, a) == _find(parent_tmp, b)


@njit(cache=True)
def sweep(open_state, parent_p, parent_d, parent_tmp, n_vertices,
          e_u1, e_u2, e_w1, e_w2, wired_pairs, free_pairs,
          ratio, uniforms, general_mode):
    """One sequential heat-bath pass over all edges.

    ratio[e] = w_open/w_closed.  parent_p (primal clusters over open edges
    plus wired pre-connections) and parent_d (dual clusters over closed edges
    plus free pre-connections) are maintained exactly: a cluster split forces
    a rebuild.  Returns the number of rebuilds.
    """
    rebuilds = 0
    n_edges = open_state.shape[0]
    for e in range(n_edges):
        if open_state[e]:
            conn_d = _find(parent_d, e_w1[e]) == _find(parent_d, e_w2[e])
            if conn_d:
                conn_p = False
            elif general_mode:
                conn_p = _connected_excluding(
                    parent_tmp, n_vertices, open_state, e_u1, e_u2,
                    wired_pairs, e, np.uint8(1), e_u1[e], e_u2[e])
            else:
                conn_p = True
        else:
            conn_p = _find(parent_p, e_u1[e]) == _find(parent_p, e_u2[e])
            if conn_p:
                conn_d = False
            elif general_mode:
                conn_d = _connected_excluding(
                    parent_tmp, n_vertices, open_state, e_w1, e_w2,
                    free_pairs, e, np.uint8(0), e_w1[e], e_w2[e])
            else:
                conn_d = True
        # loop-count change on opening: +1 / 0 / -1
        if conn_p:
            odds = ratio[e] * SQRT2
        elif conn_d:
            odds = ratio[e] / SQRT2
        else:
            odds = ratio[e]
        new_open = uniforms[e] < odds / (1.0 + odds)
        if new_open == (open_state[e] == 1):
            continue
        if new_open:
            open_state[e] = 1
            _union(parent_p, e_u1[e], e_u2[e])
            if not conn_d:  # removing the dual edge splits a dual cluster
                _rebuild_dual(parent_d, n_vertices, open_state,
                              e_w1, e_w2, free_pairs)
                rebuilds += 1
        else:
            open_state[e] = 0
            _union(parent_d, e_w1[e], e_w2[e])
            if not conn_p:  # removing the primal edge splits a cluster
                _rebuild_primal(parent_p, n_vertices, open_state,
                                e_u1, e_u2, wired_pairs)
                rebuilds += 1
    return rebuilds


@njit(cache=True)
def heat_bath_odds(open_state, parent_tmp, n_vertices, e_u1, e_u2, e_w1, e_w2,
                   wired_pairs, free_pairs, ratio, e):
    """Exact conditional odds open:closed for edge e given the rest."""
    conn_p = _connected_excluding(parent_tmp, n_vertices, open_state,
                                  e_u1, e_u2, wired_pairs, e, np.uint8(1),
                                  e_u1[e], e_u2[e])
    conn_d = _connected_excluding(parent_tmp, n_vertices, open_state,
                                  e_w1, e_w2, free_pairs, e, np.uint8(0),
                                  e_w1[e], e_w2[e])
    if conn_p:
        return ratio[e] * SQRT2
    if conn_d:
        return ratio[e] / SQRT2
    return ratio[e]


@njit(cache=True)
def count_loops(open_state, parent_c, n_corners, e_slots, b_entry, b_exit,
                b_has_strand, marked_mask):
    """Loop count by the strand diagram: connected corner components minus
    open interface paths (components holding marked corners)."""
    for i in range(n_corners):
        parent_c[i] = i
    n_edges = e_slots.shape[0]
    for e in range(n_edges):
        if open_state[e]:
            _union(parent_c, e_slots[e, 0], e_slots[e, 2])
            _union(parent_c, e_slots[e, 1], e_slots[e, 3])
        else:
            _union(parent_c, e_slots[e, 0], e_slots[e, 1])
            _union(parent_c, e_slots[e, 2], e_slots[e, 3])
    for b in range(b_entry.shape[0]):
        if b_has_strand[b]:
            _union(parent_c, b_entry[b], b_exit[b])
    # count components among corners that carry at least one strand
    loops = 0
    seen_marked = 0
    for c in range(n_corners):
        r = _find(parent_c, c)
        if marked_mask[c]:
            seen_marked += 1
    # components: count roots of corners that are attached to something
    for c in range(n_corners):
        if _find(parent_c, c) == c:
            # skip isolated corners (exterior ones never appear in strands)
            attached = False
            for d in range(n_corners):
                if d != c and _find(parent_c, d) == c:
                    attached = True
                    break
            if attached or marked_mask[c]:
                loops += 1
    return loops - (seen_marked + 1) // 2


@njit(cache=True)
def trace_interface(open_state, start_corner, c_role, c_fwd, c_rh,
                    r_corner_slots, edge_of_rhombus, br_of_rhombus,
                    b_entry, b_exit, b_has_strand, c_ang,
                    out_corners, out_wind):
    """Follow the interface from ``start_corner``; returns its length.

    out_corners[i] = i-th visited corner, out_wind[i] = cumulative geometric
    turning when crossing it (0 at the start corner).
    """
    c = start_corner
    wind = 0.0
    n = 0
    out_corners[n] = c
    out_wind[n] = 0.0
    n += 1
    max_steps = out_corners.shape[0]
    while True:
        r = c_fwd[c]
        if r < 0:
            return -n  # walked out of the domain: malformed
        e = edge_of_rhombus[r]
        if e >= 0:
            s0 = -1
            for s in range(4):
                if r_corner_slots[r, s] == c:
                    s0 = s
                    break
            if open_state[e]:
                nxt = r_corner_slots[r, s0 ^ 2]
            else:
                nxt = r_corner_slots[r, s0 ^ 1]
        else:
            b = br_of_rhombus[r]
            if b < 0 or not b_has_strand[b]:
                return -n
            nxt = b_exit[b] if b_entry[b] == c else b_entry[b]
        d = c_ang[nxt] - c_ang[c]
        while d <= -np.pi:
            d += 2 * np.pi
        while d > np.pi:
            d -= 2 * np.pi
        wind += d
        out_corners[n] = nxt
        out_wind[n] = wind
        n += 1
        if c_role[nxt] == 1:  # reached a marked corner: the exit
            return n
        if n >= max_steps:
            return -n
        c = nxt


@njit(cache=True)
def crossing_connected(parent, seta, setb, stamp, stamp_value):
    """Whether any vertex of seta shares a cluster with any of setb."""
    for i in range(seta.shape[0]):
        stamp[_find(parent, seta[i])] = stamp_value
    for i in range(setb.shape[0]):
        if stamp[_find(parent, setb[i])] == stamp_value:
            return True
    return False


@njit(cache=True)
def interior_crossing(open_state, parent_tmp, n_vertices, e_u1, e_u2,
                      seta, setb, stamp, stamp_value):
    """Side-to-side crossing through interior open edges only (no boundary
    pre-connections)."""
    for i in range(n_vertices):
        parent_tmp[i] = i
    for e in range(open_state.shape[0]):
        if open_state[e]:
            _union(parent_tmp, e_u1[e], e_u2[e])
    return crossing_connected(parent_tmp, seta, setb, stamp, stamp_value)


@njit(cache=True)
def enumerate_all(E, logw_open, logw_closed, e_u1, e_u2, e_w1, e_w2,
                  e_slots, wired_pairs, free_pairs,
                  b_entry, b_exit, b_has_strand, marked_mask,
                  n_vertices, n_corners,
                  start_corner, c_role, c_fwd, c_rh, r_corner_slots,
                  edge_of_rhombus, br_of_rhombus, c_ang, lam_ratio_re,
                  lam_ratio_im, cross_a, cross_b,
                  want_trace, want_probs):
    """Exhaustive sweep over all 2^E configurations.

    Returns (Z, cross_sum, acc_x, probs, loops_arr, cp_cd_arr) where
    acc_x[c] = sum over configs of weight * s(c) * 1(c on interface),
    cross_sum = total weight of configurations with the primal crossing,
    probs = per-config weights (if want_probs), and the last two arrays
    wire the loop-count identity check.
    """
    n_conf = 1 << E
    parent_p = np.empty(n_vertices, dtype=np.int64)
    parent_d = np.empty(n_vertices, dtype=np.int64)
    parent_c = np.empty(n_corners, dtype=np.int64)
    stamp = np.full(n_vertices, -1, dtype=np.int64)
    open_state = np.zeros(E, dtype=np.uint8)
    out_corners = np.empty(n_corners + 2, dtype=np.int64)
    out_wind = np.empty(n_corners + 2, dtype=np.float64)
    acc_x = np.zeros(n_corners)
    probs = np.zeros(n_conf if want_probs else 1)
    loops_arr = np.zeros(n_conf if want_probs else 1, dtype=np.int64)
    cpcd_arr = np.zeros(n_conf if want_probs else 1, dtype=np.int64)
    Z = 0.0
    cross_sum = 0.0
    for conf in range(n_conf):
        logw = 0.0
        for e in range(E):
            if (conf >> e) & 1:
                open_state[e] = 1
                logw += logw_open[e]
            else:
                open_state[e] = 0
                logw += logw_closed[e]
        loops = count_loops(open_state, parent_c, n_corners, e_slots,
                            b_entry, b_exit, b_has_strand, marked_mask)
        w = np.exp(logw + 0.5 * loops * np.log(2.0))
        Z += w
        _rebuild_primal(parent_p, n_vertices, open_state, e_u1, e_u2,
                        wired_pairs)
        if cross_a.shape[0] > 0:
            if crossing_connected(parent_p, cross_a, cross_b, stamp, conf + 1):
                cross_sum += w
        if want_probs:
            probs[conf] = w
            loops_arr[conf] = loops
            # primal + dual cluster counts for the Euler-identity check
            _rebuild_dual(parent_d, n_vertices, open_state, e_w1, e_w2,
                          free_pairs)
            cp = 0
            cd = 0
            for v in range(n_vertices):
                if _find(parent_p, v) == v:
                    cp += 1
                if _find(parent_d, v) == v:
                    cd += 1
            cpcd_arr[conf] = cp + cd
        if want_trace:
            n = trace_interface(open_state, start_corner, c_role, c_fwd, c_rh,
                                r_corner_slots, edge_of_rhombus, br_of_rhombus,
                                b_entry, b_exit, b_has_strand, c_ang,
                                out_corners, out_wind)
            if n < 0:
                return -1.0, 0.0, acc_x, probs, loops_arr, cpcd_arr
            for i in range(n):
                c = out_corners[i]
                # s = Re[(cos - i sin)(wind/2) * lam_b/lam_c], exactly +-1
                cw = np.cos(0.5 * out_wind[i])
                sw = np.sin(0.5 * out_wind[i])
                s = cw * lam_ratio_re[c] + sw * lam_ratio_im[c]
                if s > 0.5:
                    acc_x[c] += w
                elif s < -0.5:
                    acc_x[c] -= w
                else:
                    return -2.0, 0.0, acc_x, probs, loops_arr, cpcd_arr
    return Z, cross_sum, acc_x, probs, loops_arr, cpcd_arr
