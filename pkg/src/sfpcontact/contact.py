"""Contact process on finite graphs via the graphical construction.

Each vertex carries a rate-1 Poisson process of recovery marks and each
directed edge a rate-``lambda_max`` Poisson process of infection arrows, every
arrow holding an independent uniform mark. The process at rate
``lam <= lambda_max`` uses exactly the arrows with ``mark <= lam / lambda_max``,
so one construction drives every rate and every initial set at once
(monotone coupling).

The construction is generated lazily in fixed time windows; window ``w`` is a
pure function of ``(seed, w)``, so extending the horizon never changes earlier
events.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import binomtest

from . import _contact_kernels as K
from ._rng import TAG_REPLICA, TAG_WINDOW, derive_key, replica_seeds
from .graph import SfpGraph

EXACT_MAX_VERTICES = 12
INFESTED_DIVISOR = 16 * math.e
_EVENTS_PER_WINDOW = 1 << 11


def as_csr(graph):
    """(indptr, indices) for an ``SfpGraph`` or an adjacency list."""
    if isinstance(graph, SfpGraph):
        return np.asarray(graph.indptr, np.int64), np.asarray(graph.indices, np.int64)
    if isinstance(graph, tuple) and len(graph) == 2 and isinstance(graph[0], np.ndarray):
        return graph
    adj = [sorted(set(int(u) for u in nb)) for nb in graph]
    n = len(adj)
    for v, nb in enumerate(adj):
        for u in nb:
            if u == v or not 0 <= u < n or v not in adj[u]:
                raise ValueError(f"adjacency list is not a simple undirected graph at vertex {v}")
    indptr = np.zeros(n + 1, np.int64)
    indptr[1:] = np.cumsum([len(nb) for nb in adj])
    indices = np.array([u for nb in adj for u in nb], np.int64)
    return indptr, indices


def _vertex_mask(n: int, vertices) -> np.ndarray:
    mask = np.zeros(n, np.uint8)
    vs = np.asarray(sorted(set(int(v) for v in vertices)), np.int64)
    if vs.size and (vs[0] < 0 or vs[-1] >= n):
        raise ValueError("initial set is not a subset of the vertex set")
    mask[vs] = 1
    return mask


@dataclass(frozen=True, eq=False)
class GraphicalConstruction:
    """Shared randomness for coupled contact-process runs on one graph."""

    indptr: np.ndarray
    indices: np.ndarray
    lambda_max: float
    t_max: float
    seed: int
    window: float

    @property
    def n_vertices(self) -> int:
        return int(self.indptr.shape[0] - 1)

    @property
    def n_windows(self) -> int:
        if self.t_max <= 0:
            return 0
        return int(math.ceil(self.t_max / self.window))

    def window_events(self, w: int):
        """Events of window ``w`` clipped to ``[0, t_max]``, sorted by time.

        Returns ``(times, src, dst, marks)``; recoveries have ``dst == -1``
        (``src`` is the recovering vertex), arrows point ``src -> dst``.
        """
        n = self.n_vertices
        n_dir = self.indices.shape[0]
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(int(self.seed), spawn_key=(TAG_WINDOW, int(w)))))
        t0 = w * self.window
        rec_counts = rng.poisson(self.window, n)
        arr_counts = rng.poisson(self.window * self.lambda_max, n_dir)
        n_rec = int(rec_counts.sum())
        n_arr = int(arr_counts.sum())
        rec_v = np.repeat(np.arange(n, dtype=np.int64), rec_counts)
        edge_src = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        arr_e = np.repeat(np.arange(n_dir, dtype=np.int64), arr_counts)
        times = t0 + rng.random(n_rec + n_arr) * self.window
        marks = np.concatenate([np.zeros(n_rec), rng.random(n_arr)])
        src = np.concatenate([rec_v, edge_src[arr_e]])
        dst = np.concatenate([np.full(n_rec, -1, np.int64), self.indices[arr_e]])
        keep = times <= self.t_max
        order = np.argsort(times[keep], kind="stable")
        return (times[keep][order], src[keep][order], dst[keep][order], marks[keep][order])

    def iter_windows(self):
        for w in range(self.n_windows):
            yield self.window_events(w)

    def all_events(self):
        parts = list(self.iter_windows())
        if not parts:
            empty = np.zeros(0)
            return empty, np.zeros(0, np.int64), np.zeros(0, np.int64), empty
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))

    def recovery_times(self, v: int) -> np.ndarray:
        times, src, dst, _ = self.all_events()
        return times[(dst < 0) & (src == v)]

    def arrow_times(self, u: int, v: int, lam: Optional[float] = None):
        """Arrow times and marks on the directed edge ``u -> v``.

        With ``lam`` given, only the arrows visible at that rate.
        """
        times, src, dst, marks = self.all_events()
        sel = (src == u) & (dst == v)
        if lam is not None:
            sel &= marks <= lam / self.lambda_max
        return times[sel], marks[sel]


def build_graphical(graph, lambda_max: float, t_max: float, seed: int,
                    window: Optional[float] = None) -> GraphicalConstruction:
    if not lambda_max > 0:
        raise ValueError("lambda_max must be > 0")
    if not t_max >= 0:
        raise ValueError("t_max must be >= 0")
    indptr, indices = as_csr(graph)
    if window is None:
        rate = (indptr.shape[0] - 1) + indices.shape[0] * lambda_max
        window = max(1e-3, _EVENTS_PER_WINDOW / max(rate, 1.0))
    return GraphicalConstruction(indptr, indices, float(lambda_max), float(t_max), int(seed), float(window))


@dataclass
class Trajectory:
    """Changes of the infected set, in time order.

    ``kinds`` holds 1 for infection and 0 for recovery; ``sources`` is the
    infecting vertex (-1 for recoveries).
    """

    lam: float
    initial: np.ndarray
    times: np.ndarray
    vertices: np.ndarray
    kinds: np.ndarray
    sources: np.ndarray
    final_infected: np.ndarray
    extinction_time: Optional[float]
    t_max: float

    @property
    def censored(self) -> bool:
        return self.extinction_time is None

    @property
    def tau(self) -> float:
        """Extinction time, or ``t_max`` when censored (a lower bound)."""
        return self.t_max if self.extinction_time is None else self.extinction_time

    def events(self):
        for t, v, k, s in zip(self.times.tolist(), self.vertices.tolist(),
                              self.kinds.tolist(), self.sources.tolist()):
            yield t, v, "infect" if k == K.KIND_INFECT else "recover", s

    def infected_at(self, t: float) -> set:
        cur = set(self.initial.tolist())
        for time, v, kind, _ in self.events():
            if time > t:
                break
            if kind == "infect":
                cur.add(v)
            else:
                cur.discard(v)
        return cur

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time,vertex,event\n")
            for t, v, kind, _ in self.events():
                fh.write(f"{t!r},{v},{kind}\n")


@dataclass
class CouplingCertificate:
    """Containment checks between coupled configurations.

    ``pairs`` lists index pairs (a, b) with configuration a dominated by b;
    ``violations[k]`` counts event times at which pair k broke containment.
    Any nonzero count indicates an implementation bug, not randomness.
    """

    lambdas: list
    initials: list
    pairs: list
    violations: list
    first_violation_time: list
    tau_order_violations: int = 0
    events_checked: int = 0

    @property
    def ok(self) -> bool:
        return not any(self.violations) and self.tau_order_violations == 0


def _coupled_replay(gc: GraphicalConstruction, lambdas: Sequence[float], initials: Sequence,
                    pairs, record: bool):
    n = gc.n_vertices
    k_cfg = len(lambdas)
    for lam in lambdas:
        if not 0 < lam <= gc.lambda_max:
            raise ValueError(f"lambda {lam} outside (0, lambda_max={gc.lambda_max}]")
    state = np.zeros((k_cfg, n), np.uint8)
    for c, init in enumerate(initials):
        state[c] = _vertex_mask(n, init)
    count = state.sum(axis=1).astype(np.int64)
    ext = np.where(count == 0, 0.0, -1.0)
    thr = np.array([lam / gc.lambda_max for lam in lambdas])
    pair_a = np.array([p[0] for p in pairs], np.int64)
    pair_b = np.array([p[1] for p in pairs], np.int64)
    viol = np.zeros(len(pairs), np.int64)
    first = np.full(len(pairs), -1.0)
    cap = 1024 if record else 1
    logs = [np.empty(cap), np.empty(cap, np.int64), np.empty(cap, np.int64),
            np.empty(cap, np.int64), np.empty(cap, np.int64)]
    nlog = 0
    checked = 0
    if np.all(ext >= 0):
        done = True
    else:
        done = False
    w = 0
    while not done and w < gc.n_windows:
        times, src, dst, marks = gc.window_events(w)
        checked += times.shape[0]
        *logs, nlog, done = K.replay_window(times, src, dst, marks, thr, state, count, ext,
                                            pair_a, pair_b, viol, first, record, *logs, nlog)
        w += 1
    return state, ext, viol, first, [a[:nlog] for a in logs], checked


def _trajectory(c, lam, init, state, ext, logs, t_max, n):
    log_t, log_c, log_v, log_k, log_s = logs
    sel = log_c == c
    return Trajectory(lam=float(lam), initial=np.flatnonzero(_vertex_mask(n, init)),
                      times=log_t[sel], vertices=log_v[sel], kinds=log_k[sel], sources=log_s[sel],
                      final_infected=np.flatnonzero(state[c]),
                      extinction_time=None if ext[c] < 0 else float(ext[c]), t_max=t_max)


def run(gc: GraphicalConstruction, lam: float, initial: Optional[Iterable[int]] = None,
        record: bool = True) -> Trajectory:
    """Replay the construction at rate ``lam`` from ``initial`` (default: all vertices)."""
    n = gc.n_vertices
    init = range(n) if initial is None else list(initial)
    state, ext, _, _, logs, _ = _coupled_replay(gc, [lam], [init], [], record)
    return _trajectory(0, lam, init, state, ext, logs, gc.t_max, n)


def coupled_run(gc: GraphicalConstruction, lambdas: Sequence[float], initial=None,
                record: bool = True):
    """Run several (rate, initial set) configurations on one construction.

    ``initial`` is one vertex set for every rate, or a list with one set per
    rate. Containment is checked for every pair (a, b) with
    ``lambdas[a] <= lambdas[b]`` and ``initial[a] ⊆ initial[b]``.
    """
    lambdas = [float(x) for x in lambdas]
    n = gc.n_vertices
    if initial is None:
        initials = [list(range(n))] * len(lambdas)
    elif len(lambdas) > 0 and isinstance(initial, (list, tuple)) and len(initial) == len(lambdas) \
            and all(isinstance(x, (set, frozenset, list, tuple, np.ndarray, range)) for x in initial):
        initials = [list(x) for x in initial]
    else:
        initials = [list(initial)] * len(lambdas)
    sets = [set(int(v) for v in s) for s in initials]
    pairs = [(a, b) for a in range(len(lambdas)) for b in range(len(lambdas))
             if a != b and lambdas[a] <= lambdas[b] and sets[a] <= sets[b]
             and not (lambdas[a] == lambdas[b] and sets[a] == sets[b] and a > b)]
    state, ext, viol, first, logs, checked = _coupled_replay(gc, lambdas, initials, pairs, record)
    trajs = [_trajectory(c, lambdas[c], initials[c], state, ext, logs, gc.t_max, n)
             for c in range(len(lambdas))]
    tau_bad = sum(1 for a, b in pairs if trajs[a].tau > trajs[b].tau)
    cert = CouplingCertificate(lambdas=lambdas, initials=[sorted(s) for s in sets], pairs=pairs,
                               violations=viol.tolist(), first_violation_time=first.tolist(),
                               tau_order_violations=tau_bad, events_checked=checked)
    return trajs, cert


def check_trajectory(graph, traj: Trajectory) -> None:
    """Assert legality: infections along edges from infected sources into
    healthy targets, recoveries of infected vertices only, unit size changes."""
    indptr, indices = as_csr(graph)
    cur = set(traj.initial.tolist())
    last = -math.inf
    for t, v, kind, s in traj.events():
        assert t >= last, "events out of order"
        last = t
        if kind == "infect":
            assert s in cur, f"infection of {v} at {t} from healthy source {s}"
            assert v not in cur, f"infection of already infected {v} at {t}"
            assert v in indices[indptr[s]:indptr[s + 1]], f"infection of {v} along non-edge"
            cur.add(v)
        else:
            assert v in cur, f"recovery of healthy vertex {v} at {t}"
            cur.remove(v)
            if not cur:
                assert traj.extinction_time == t
    assert cur == set(traj.final_infected.tolist())


@dataclass(frozen=True)
class ReplicaResult:
    replica: int
    lam: float
    tau: float
    censored: bool
    final_infected: int

    def to_json(self) -> dict:
        return {"replica": self.replica, "lambda": self.lam, "tau": self.tau,
                "censored": self.censored, "final_infected": self.final_infected}


def extinction_time_replicas(graph, lam: float, t_max: float, n_rep: int, seed: int,
                             initial=None, engine: str = "direct",
                             rep_start: int = 0) -> list:
    """Independent extinction-time replicas started from ``initial`` (default: full).

    ``engine="direct"`` samples only state-changing events (same law as
    replaying a fresh graphical construction, much cheaper);
    ``engine="graphical"`` replays an independent construction per replica.
    Censored replicas report ``tau = t_max``.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    indptr, indices = as_csr(graph)
    n = indptr.shape[0] - 1
    init = range(n) if initial is None else initial
    mask = _vertex_mask(n, init)
    if engine == "direct":
        key = np.uint64(derive_key(seed, TAG_REPLICA))
        rev = K.reverse_slots(indptr, indices)
        horizon = min(float(t_max), sys.float_info.max)
        taus, cens, final = K.direct_replicas(indptr, indices, rev, float(lam), horizon, mask,
                                              key, int(rep_start), int(n_rep))
        return [ReplicaResult(rep_start + k, float(lam), float(taus[k]), bool(cens[k]), int(final[k]))
                for k in range(n_rep)]
    if engine == "graphical":
        seeds = replica_seeds(seed, rep_start + n_rep)[rep_start:]
        out = []
        for k, s in enumerate(seeds):
            gc = build_graphical((indptr, indices), lam, t_max, s)
            tr = run(gc, lam, np.flatnonzero(mask), record=False)
            out.append(ReplicaResult(rep_start + k, float(lam), tr.tau, tr.censored,
                                     int(tr.final_infected.shape[0])))
        return out
    raise ValueError(f"unknown engine {engine!r}")


@dataclass(frozen=True)
class SurvivalEstimate:
    lam: float
    estimate: float
    ci_low: float
    ci_high: float
    survivors: int
    n_rep: int
    t_max: float
    coupling_violations: int = 0


def survival_probability_estimate(graph, lam, seed_vertex: int, t_max: float, n_rep: int,
                                  seed: int):
    """Fraction of replicas still infected at ``t_max`` from ``{seed_vertex}``.

    A finite-box, finite-horizon proxy for the non-extinction probability,
    with a Wilson 95% interval. Passing a list of rates evaluates all of them
    on shared constructions, which makes the estimates monotone in the rate.
    """
    lams = [float(lam)] if np.isscalar(lam) else sorted(float(x) for x in lam)
    indptr, indices = as_csr(graph)
    n = indptr.shape[0] - 1
    if not 0 <= seed_vertex < n:
        raise ValueError("seed_vertex not in graph")
    alive = np.zeros(len(lams), np.int64)
    violations = 0
    for s in replica_seeds(seed, n_rep):
        gc = build_graphical((indptr, indices), max(lams), t_max, s)
        trajs, cert = coupled_run(gc, lams, [seed_vertex], record=False)
        alive += np.array([t.censored for t in trajs])
        violations += sum(cert.violations) + cert.tau_order_violations
    out = []
    for lm, k in zip(lams, alive.tolist()):
        ci = binomtest(k, n_rep).proportion_ci(confidence_level=0.95, method="wilson")
        out.append(SurvivalEstimate(lm, k / n_rep, float(ci.low), float(ci.high), k, n_rep,
                                    float(t_max), violations))
    return out[0] if np.isscalar(lam) else out


def infested_check(subset, state, lam: float) -> bool:
    """True iff at least ``lam / (16 e)`` of ``subset`` is infected."""
    subset = set(int(v) for v in subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    hit = len(subset & set(int(v) for v in state))
    return hit >= lam / INFESTED_DIVISOR * len(subset)


@dataclass(frozen=True)
class RetentionResult:
    center: int
    lam: float
    durations: tuple
    frequencies: tuple
    n_rep: int


def star_retention_probe(graph, center: int, lam: float, duration, n_rep: int, seed: int):
    """Frequency with which the closed neighbourhood of ``center``, started fully
    infected, stays infested throughout ``[0, duration]``.

    ``duration`` may be a list; all durations share the same replicas, so the
    frequencies are nonincreasing in the duration.
    """
    durations = tuple(float(x) for x in (duration if np.ndim(duration) else [duration]))
    indptr, indices = as_csr(graph)
    n = indptr.shape[0] - 1
    if not 0 <= center < n:
        raise ValueError("center not in graph")
    hood = np.concatenate([[center], indices[indptr[center]:indptr[center + 1]]])
    in_hood = np.zeros(n, bool)
    in_hood[hood] = True
    need = lam / INFESTED_DIVISOR * hood.shape[0]
    horizon = max(durations)
    kept = np.zeros(len(durations), np.int64)
    for s in replica_seeds(seed, n_rep):
        gc = build_graphical((indptr, indices), lam, horizon, s)
        tr = run(gc, lam, hood.tolist(), record=True)
        cnt = hood.shape[0]
        loss = math.inf
        for t, v, k in zip(tr.times.tolist(), tr.vertices.tolist(), tr.kinds.tolist()):
            if in_hood[v]:
                cnt += 1 if k == K.KIND_INFECT else -1
                if cnt < need:
                    loss = t
                    break
        kept += np.array([loss > d for d in durations])
    freqs = tuple((kept / n_rep).tolist())
    return RetentionResult(center, float(lam), durations, freqs, n_rep)


def exact_mean_extinction(graph, lam: float, initial=None) -> float:
    """Mean extinction time of the exact chain, by a sparse linear solve.

    States are infected sets encoded as bitmasks; for every nonempty state
    ``-sum_s' Q(s, s') T(s') = 1`` with ``T(empty) = 0``.
    """
    indptr, indices = as_csr(graph)
    n = indptr.shape[0] - 1
    if n > EXACT_MAX_VERTICES:
        raise ValueError(f"exact solve limited to {EXACT_MAX_VERTICES} vertices, got {n}")
    if n == 0:
        return 0.0
    nbr_mask = np.zeros(n, np.int64)
    for v in range(n):
        for u in indices[indptr[v]:indptr[v + 1]]:
            nbr_mask[v] |= 1 << int(u)
    n_states = 1 << n
    rows, cols, vals = [], [], []
    for s in range(1, n_states):
        out_rate = 0.0
        for v in range(n):
            bit = 1 << v
            if s & bit:
                t = s ^ bit
                out_rate += 1.0
                if t:
                    rows.append(s - 1); cols.append(t - 1); vals.append(-1.0)
            else:
                k = bin(s & nbr_mask[v]).count("1")
                if k:
                    rate = lam * k
                    out_rate += rate
                    rows.append(s - 1); cols.append((s | bit) - 1); vals.append(-rate)
        rows.append(s - 1); cols.append(s - 1); vals.append(out_rate)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n_states - 1, n_states - 1))
    T = spla.spsolve(A, np.ones(n_states - 1))
    start = n_states - 1 if initial is None else int(_vertex_mask(n, initial).dot(1 << np.arange(n)))
    return 0.0 if start == 0 else float(T[start - 1])
