"""Numba kernels for SFP edge sampling.

Both samplers decide each unordered pair {i, j} (i < j) exactly once, from the
stream of the smaller id ``i``.

The accelerated kernel splits the targets into dyadic weight layers; each layer
is sorted along a Morton curve so every node of the implicit 2^d-ary tree over
the box is a contiguous index range. For a source vertex the tree is walked
from the root: small or leaf nodes are evaluated pair by pair, well-separated
nodes, and nodes expected to yield at most one candidate, are handled by
domination-rejection with the bound ``q = rho * w_i * wmax_layer / r_min**alpha``
(geometric skipping over the range, thinning each candidate by p / q). The only approximation is the
optional ``cutoff``: nodes whose dominating mass ``m * q`` is below it are
skipped outright.
"""

import math

import numpy as np
from numba import njit

from ._rng import next_uniform, stream_key

LEAF_SIZE = 8


@njit(cache=True)
def pair_distance(x, y, side, torus):
    s = 0.0
    for k in range(x.shape[0]):
        dx = abs(x[k] - y[k])
        if torus and dx > side - dx:
            dx = side - dx
        s += dx * dx
    return math.sqrt(s)


@njit(cache=True)
def _edge_prob(dist, wx, wy, rho, alpha):
    if dist == 0.0:
        return 1.0
    return -math.expm1(-rho * (wx * wy) / dist**alpha)


@njit(cache=True)
def _push(buf_u, buf_v, count, u, v):
    if count >= buf_u.shape[0]:
        new_u = np.empty(buf_u.shape[0] * 2, np.int64)
        new_v = np.empty(buf_u.shape[0] * 2, np.int64)
        new_u[:count] = buf_u[:count]
        new_v[:count] = buf_v[:count]
        buf_u = new_u
        buf_v = new_v
    buf_u[count] = u
    buf_v[count] = v
    return buf_u, buf_v, count + 1


@njit(cache=True)
def reference_edges(pos, w, rho, alpha, side, torus, key):
    n = pos.shape[0]
    buf_u = np.empty(max(16, 4 * n), np.int64)
    buf_v = np.empty(max(16, 4 * n), np.int64)
    count = 0
    state = np.empty(1, np.uint64)
    for i in range(n - 1):
        state[0] = stream_key(key, i)
        for j in range(i + 1, n):
            p = _edge_prob(pair_distance(pos[i], pos[j], side, torus), w[i], w[j], rho, alpha)
            if next_uniform(state) < p:
                buf_u, buf_v, count = _push(buf_u, buf_v, count, i, j)
    return buf_u[:count], buf_v[:count]


@njit(cache=True)
def morton_codes(pos, side, levels):
    n, d = pos.shape
    ncell = 1 << levels
    codes = np.zeros(n, np.int64)
    for i in range(n):
        code = 0
        for b in range(levels - 1, -1, -1):
            for k in range(d):
                c = int(pos[i, k] / side * ncell)
                if c >= ncell:
                    c = ncell - 1
                elif c < 0:
                    c = 0
                code = (code << 1) | ((c >> b) & 1)
        codes[i] = code
    return codes


@njit(cache=True)
def _interleave(coords, level, d):
    code = 0
    for b in range(level - 1, -1, -1):
        for k in range(d):
            code = (code << 1) | ((coords[k] >> b) & 1)
    return code


@njit(cache=True)
def _box_gap(x, lo, hi, side, torus):
    if lo <= x < hi:
        return 0.0
    if not torus:
        if x < lo:
            return lo - x
        return x - hi
    a = (lo - x) % side
    b = (x - hi) % side
    return a if a < b else b


@njit(cache=True)
def accelerated_edges(pos, w, rho, alpha, side, torus, key, order, codes,
                      layer_start, layer_wmax, levels, cutoff):
    n, d = pos.shape
    n_layers = layer_start.shape[0] - 1
    buf_u = np.empty(max(16, 4 * n), np.int64)
    buf_v = np.empty(max(16, 4 * n), np.int64)
    count = 0
    state = np.empty(1, np.uint64)
    max_stack = 64 * (levels + 1) * (1 << d)
    st_level = np.empty(max_stack, np.int64)
    st_coords = np.empty((max_stack, d), np.int64)
    parent = np.empty(d, np.int64)
    sqrt_d = math.sqrt(d)
    if rho <= 0.0:
        return buf_u[:0], buf_v[:0]
    for i in range(n):
        state[0] = stream_key(key, i)
        xi = pos[i]
        wi = w[i]
        for b in range(n_layers):
            start = layer_start[b]
            stop = layer_start[b + 1]
            if stop <= start:
                continue
            wmax = layer_wmax[b]
            top = 0
            st_level[0] = 0
            for k in range(d):
                st_coords[0, k] = 0
            top = 1
            while top > 0:
                top -= 1
                lev = st_level[top]
                shift = d * (levels - lev)
                prefix = _interleave(st_coords[top], lev, d)
                lo_code = prefix << shift
                hi_code = (prefix + 1) << shift
                lo = start + np.searchsorted(codes[start:stop], lo_code)
                hi = start + np.searchsorted(codes[start:stop], hi_code)
                m = hi - lo
                if m == 0:
                    continue
                h = side / (1 << lev)
                r2 = 0.0
                for k in range(d):
                    g = _box_gap(xi[k], st_coords[top, k] * h, (st_coords[top, k] + 1) * h, side, torus)
                    r2 += g * g
                r_min = math.sqrt(r2)
                qbar = math.inf
                if r_min > 0.0:
                    qbar = rho * wi * wmax / r_min**alpha
                    if cutoff > 0.0 and m * qbar < cutoff:
                        continue
                if m <= LEAF_SIZE or lev == levels:
                    for jj in range(lo, hi):
                        y = order[jj]
                        if y <= i:
                            continue
                        p = _edge_prob(pair_distance(xi, pos[y], side, torus), wi, w[y], rho, alpha)
                        if next_uniform(state) < p:
                            buf_u, buf_v, count = _push(buf_u, buf_v, count, i, y)
                    continue
                if r_min > 0.0 and qbar < 1.0 and (m * qbar <= 1.0 or h * sqrt_d <= 0.5 * r_min):
                    log_q = math.log1p(-qbar)
                    jj = lo - 1
                    while True:
                        step = math.floor(math.log(next_uniform(state)) / log_q)
                        if step >= hi - jj - 1:
                            break
                        jj += 1 + int(step)
                        y = order[jj]
                        if y <= i:
                            continue
                        p = _edge_prob(pair_distance(xi, pos[y], side, torus), wi, w[y], rho, alpha)
                        if next_uniform(state) * qbar < p:
                            buf_u, buf_v, count = _push(buf_u, buf_v, count, i, y)
                    continue
                for k in range(d):
                    parent[k] = st_coords[top, k]
                for c in range(1 << d):
                    st_level[top] = lev + 1
                    for k in range(d):
                        st_coords[top, k] = 2 * parent[k] + ((c >> k) & 1)
                    top += 1
    return buf_u[:count], buf_v[:count]
