"""Numba kernels for contact-process dynamics."""

import math

import numpy as np
from numba import njit

from ._rng import _GOLDEN, _INV53, _S11, exp_draw, mix64, next_uniform, stream_key

KIND_RECOVER = 0
KIND_INFECT = 1


@njit(cache=True, nogil=True)
def _grow(arr, need):
    if need <= arr.shape[0]:
        return arr
    out = np.empty(max(need, 2 * arr.shape[0]), arr.dtype)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True, nogil=True)
def replay_window(times, src, dst, marks, thr, state, count, ext, pair_a, pair_b,
                  viol, first_viol, record, log_t, log_c, log_v, log_k, log_s, nlog):
    """Replay one window of graphical-construction events for K configurations.

    ``state`` is (K, n) uint8, ``count`` the infected count per configuration and
    ``ext`` the extinction time (negative while alive). Arrows whose mark exceeds
    ``thr[c]`` are invisible to configuration ``c``. After every event the
    touched vertex is checked for containment along each (pair_a, pair_b).
    Returns the (possibly reallocated) log arrays, ``nlog`` and whether every
    configuration is extinct.
    """
    K = state.shape[0]
    n_events = times.shape[0]
    n_pairs = pair_a.shape[0]
    for e in range(n_events):
        t = times[e]
        u = src[e]
        v = dst[e]
        target = u if v < 0 else v
        alive = 0
        for c in range(K):
            if ext[c] >= 0.0:
                continue
            alive += 1
            if v < 0:
                if state[c, u] == 1:
                    state[c, u] = 0
                    count[c] -= 1
                    if record:
                        if nlog >= log_t.shape[0]:
                            log_t = _grow(log_t, nlog + 1)
                            log_c = _grow(log_c, nlog + 1)
                            log_v = _grow(log_v, nlog + 1)
                            log_k = _grow(log_k, nlog + 1)
                            log_s = _grow(log_s, nlog + 1)
                        log_t[nlog] = t
                        log_c[nlog] = c
                        log_v[nlog] = u
                        log_k[nlog] = KIND_RECOVER
                        log_s[nlog] = -1
                        nlog += 1
                    if count[c] == 0:
                        ext[c] = t
            else:
                if marks[e] <= thr[c] and state[c, u] == 1 and state[c, v] == 0:
                    state[c, v] = 1
                    count[c] += 1
                    if record:
                        if nlog >= log_t.shape[0]:
                            log_t = _grow(log_t, nlog + 1)
                            log_c = _grow(log_c, nlog + 1)
                            log_v = _grow(log_v, nlog + 1)
                            log_k = _grow(log_k, nlog + 1)
                            log_s = _grow(log_s, nlog + 1)
                        log_t[nlog] = t
                        log_c[nlog] = c
                        log_v[nlog] = v
                        log_k[nlog] = KIND_INFECT
                        log_s[nlog] = u
                        nlog += 1
        for p in range(n_pairs):
            if state[pair_a[p], target] > state[pair_b[p], target]:
                viol[p] += 1
                if first_viol[p] < 0.0:
                    first_viol[p] = t
        if alive == 0:
            return log_t, log_c, log_v, log_k, log_s, nlog, True
    all_dead = True
    for c in range(K):
        if ext[c] < 0.0:
            all_dead = False
    return log_t, log_c, log_v, log_k, log_s, nlog, all_dead


# -- direct (state-changing events only) sampler ---------------------------

@njit(cache=True, nogil=True)
def reverse_slots(indptr, indices):
    """``rev[j]`` is the CSR slot of the reversed edge of slot ``j``."""
    n = indptr.shape[0] - 1
    rev = np.empty(indices.shape[0], np.int64)
    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            w = indices[j]
            lo, hi = indptr[w], indptr[w + 1]
            while lo < hi:
                mid = (lo + hi) // 2
                if indices[mid] < v:
                    lo = mid + 1
                else:
                    hi = mid
            rev[j] = lo
    return rev


@njit(cache=True, nogil=True, inline="always")
def _bnd_add(bnd, bpos, nb, j):
    bpos[j] = nb
    bnd[nb] = j
    return nb + 1


@njit(cache=True, nogil=True, inline="always")
def _bnd_remove(bnd, bpos, nb, j):
    k = bpos[j]
    last = bnd[nb - 1]
    bnd[k] = last
    bpos[last] = k
    bpos[j] = -1
    return nb - 1


# fastmath assumes finite values: callers pass a finite t_max.
@njit(cache=True, nogil=True, error_model="numpy", fastmath=True)
def direct_replicas(indptr, indices, rev, lam, t_max, init, key, rep_start, n_rep):
    """Independent extinction-time replicas.

    Only state-changing events are sampled. With N_I infected vertices and H
    directed infected-to-healthy edges, the next event is a recovery of a
    uniform infected vertex with probability N_I / (N_I + lam H), otherwise an
    infection along a uniform boundary edge. Boundary edges are kept as a
    swap-remove list of CSR slots. Replica ``k`` draws from substream
    ``rep_start + k`` of ``key``.
    """
    n = indptr.shape[0] - 1
    m2 = indices.shape[0]
    taus = np.empty(n_rep)
    censored = np.zeros(n_rep, np.bool_)
    final = np.zeros(n_rep, np.int64)
    state = np.zeros(n, np.uint8)
    inf_list = np.empty(n, np.int64)
    bnd = np.empty(m2, np.int64)
    bpos = np.empty(m2, np.int64)
    for r in range(n_rep):
        z = stream_key(key, rep_start + r)
        n_inf = 0
        for v in range(n):
            state[v] = init[v]
            if init[v]:
                inf_list[n_inf] = v
                n_inf += 1
        nb = 0
        for v in range(n):
            for j in range(indptr[v], indptr[v + 1]):
                bpos[j] = -1
                if state[v] and state[indices[j]] == 0:
                    nb = _bnd_add(bnd, bpos, nb, j)
        t = 0.0
        while True:
            if n_inf == 0:
                taus[r] = t
                break
            rate = n_inf + lam * nb
            e, z = exp_draw(z)
            t += e / rate
            if t > t_max:
                taus[r] = t_max
                censored[r] = True
                break
            z += _GOLDEN
            x = (np.float64(np.int64(mix64(z) >> _S11)) + 0.5) * _INV53 * rate
            if x < n_inf:
                k = int(x)
                if k >= n_inf:
                    k = n_inf - 1
                v = inf_list[k]
                inf_list[k] = inf_list[n_inf - 1]
                n_inf -= 1
                state[v] = 0
                for j in range(indptr[v], indptr[v + 1]):
                    # v was infected: slot j is on the boundary iff its target is healthy
                    if bpos[j] >= 0:
                        nb = _bnd_remove(bnd, bpos, nb, j)
                    else:
                        nb = _bnd_add(bnd, bpos, nb, rev[j])
            else:
                k = int((x - n_inf) / lam)
                if k >= nb:
                    k = nb - 1
                u = indices[bnd[k]]
                state[u] = 1
                inf_list[n_inf] = u
                n_inf += 1
                for j in range(indptr[u], indptr[u + 1]):
                    rj = rev[j]
                    if bpos[rj] >= 0:
                        nb = _bnd_remove(bnd, bpos, nb, rj)
                    else:
                        nb = _bnd_add(bnd, bpos, nb, j)
        final[r] = n_inf
    return taus, censored, final
