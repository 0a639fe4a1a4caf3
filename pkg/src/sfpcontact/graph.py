"""Scale-free percolation graphs restricted to a box.

Vertices are a unit-intensity Poisson point process on ``[0, n^{1/d})^d`` with
i.i.d. Pareto(tau - 1) weights on ``[1, inf)``; each pair is joined
independently with probability ``1 - exp(-rho * w_x * w_y / |x - y|^alpha)``.

Randomness is split in three independent streams (points, weights, edges), so a
caller can hold positions and weights fixed and resample only the edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _sampling
from ._rng import TAG_EDGES, TAG_REFERENCE, derive_key

BOUNDARIES = ("box", "torus")
REFERENCE_MAX_VERTICES = 200_000
NEGLIGIBLE_MASS = 1e-12

_STREAM_POINTS = 1
_STREAM_WEIGHTS = 2


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be parsed."""


@dataclass(frozen=True)
class SfpParams:
    """Model parameters.

    ``gamma`` and ``side`` are derived on access and never stored.
    """

    d: int
    alpha: float
    tau: float
    rho: float
    volume: float
    boundary: str = "box"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not self.tau > 1:
            raise ValueError(f"tau must be > 1 (Pareto tail parameter tau - 1 > 0), got {self.tau!r}")
        if not self.rho >= 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be a finite non-negative number, got {self.rho!r}")
        if not self.volume > 0 or not math.isfinite(self.volume):
            raise ValueError(f"volume must be a finite positive number, got {self.volume!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def gamma(self) -> float:
        return self.alpha * (self.tau - 1) / self.d

    @property
    def side(self) -> float:
        return self.volume ** (1.0 / self.d)

    @property
    def torus(self) -> bool:
        return self.boundary == "torus"

    def replace(self, **changes) -> "SfpParams":
        fields = dict(d=self.d, alpha=self.alpha, tau=self.tau, rho=self.rho,
                      volume=self.volume, boundary=self.boundary)
        fields.update(changes)
        return SfpParams(**fields)

    def to_dict(self) -> dict:
        return dict(d=self.d, alpha=self.alpha, tau=self.tau, rho=self.rho,
                    volume=self.volume, boundary=self.boundary)


@dataclass(frozen=True)
class Vertex:
    id: int
    position: tuple
    weight: float


@dataclass(frozen=True, eq=False)
class SfpGraph:
    """Immutable sampled graph.

    Adjacency is stored in CSR form (``indptr``, ``indices``) with each
    neighbour list sorted; all arrays are read-only.
    """

    params: SfpParams
    positions: np.ndarray
    weights: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    seed_record: Optional[int] = None
    sampler: str = field(default="reference", compare=False)

    def __post_init__(self):
        for arr in (self.positions, self.weights, self.indptr, self.indices):
            arr.setflags(write=False)

    # -- basic accessors -------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def vertices(self) -> list:
        return [Vertex(i, tuple(float(c) for c in self.positions[i]), float(self.weights[i]))
                for i in range(self.n_vertices)]

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges ``u < v`` in lexicographic order."""
        src = np.repeat(np.arange(self.n_vertices), self.degrees())
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]]).astype(np.int64)

    def adjacency_lists(self) -> list:
        return [self.neighbors(v).tolist() for v in range(self.n_vertices)]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < nb.shape[0] and nb[k] == v)

    def __eq__(self, other):
        if not isinstance(other, SfpGraph):
            return NotImplemented
        return (self.params == other.params
                and self.seed_record == other.seed_record
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = None

    def check_invariants(self) -> None:
        """Raise AssertionError unless adjacency is symmetric, simple and sorted."""
        n = self.n_vertices
        assert self.indptr.shape == (n + 1,) and self.indptr[0] == 0
        assert self.indptr[-1] == self.indices.shape[0]
        src = np.repeat(np.arange(n), self.degrees())
        assert not np.any(src == self.indices), "self-loop"
        for v in range(n):
            nb = self.neighbors(v)
            assert np.all(np.diff(nb) > 0), f"unsorted or duplicate neighbours at {v}"
        fwd = set(zip(src.tolist(), self.indices.tolist()))
        assert all((b, a) in fwd for a, b in fwd), "asymmetric adjacency"
        assert np.all(self.weights >= 1.0), "weight below 1"
        if n:
            assert np.all(self.positions >= 0) and np.all(self.positions < self.params.side)


def graph_from_edges(params: SfpParams, positions, weights, edges,
                     seed_record: Optional[int] = None, sampler: str = "fixture") -> SfpGraph:
    """Build an ``SfpGraph`` from explicit arrays (fixtures, deserialisation)."""
    positions = np.array(positions, dtype=np.float64).reshape(-1, params.d)
    weights = np.array(weights, dtype=np.float64).reshape(-1)
    n = weights.shape[0]
    if positions.shape[0] != n:
        raise ValueError("positions and weights disagree on vertex count")
    if n and np.unique(positions, axis=0).shape[0] != n:
        raise ValueError("coincident points")
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if np.any(edges < 0) or np.any(edges >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loop")
    return _csr_graph(params, positions, weights, edges[:, 0], edges[:, 1], seed_record, sampler)


def _csr_graph(params, positions, weights, u, v, seed_record, sampler) -> SfpGraph:
    n = weights.shape[0]
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    if lo.size:
        key = np.unique(lo * n + hi)
        lo, hi = key // n, key % n
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return SfpGraph(params, positions, weights, indptr, dst.astype(np.int64),
                    seed_record=seed_record, sampler=sampler)


# -- primitive samplers ---------------------------------------------------

def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(purpose,))))


def sample_points(params: SfpParams, seed: int) -> np.ndarray:
    """Poisson(volume) many i.i.d. uniform points in the box, shape (N, d)."""
    rng = _stream(seed, _STREAM_POINTS)
    count = rng.poisson(params.volume)
    pts = rng.random((count, params.d)) * params.side
    # Guard against rounding up to the open upper face.
    np.minimum(pts, np.nextafter(params.side, 0.0), out=pts)
    return pts


def sample_weight(tau, u):
    """Inverse-CDF Pareto draw ``u ** (-1 / (tau - 1))``; accepts scalars or arrays."""
    if not tau > 1:
        raise ValueError(f"tau must be > 1, got {tau!r}")
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr <= 0) or np.any(u_arr > 1):
        raise ValueError("u must lie in (0, 1]")
    out = u_arr ** (-1.0 / (tau - 1.0))
    return float(out) if np.ndim(u) == 0 else out


def sample_weights(params: SfpParams, count: int, seed: int) -> np.ndarray:
    rng = _stream(seed, _STREAM_WEIGHTS)
    return sample_weight(params.tau, 1.0 - rng.random(count))


def connection_probability(x, y, wx: float, wy: float, params: SfpParams) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dist = _sampling.pair_distance(x, y, params.side, params.torus)
    if dist == 0.0:
        raise ValueError("coincident points")
    return float(-math.expm1(-params.rho * (wx * wy) / dist ** params.alpha))


def sample_edges_reference(params: SfpParams, positions: np.ndarray, weights: np.ndarray,
                           seed: int) -> np.ndarray:
    """All-pairs edge sampling with fixed positions and weights; returns (m, 2) ids."""
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, params.d)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    key = np.uint64(derive_key(seed, TAG_REFERENCE))
    u, v = _sampling.reference_edges(positions, weights, float(params.rho), float(params.alpha),
                                     float(params.side), params.torus, key)
    return np.column_stack([u, v])


def sample_edges_accelerated(params: SfpParams, positions: np.ndarray, weights: np.ndarray,
                             seed: int, cutoff: float = NEGLIGIBLE_MASS) -> np.ndarray:
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, params.d)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n = weights.shape[0]
    if n < 2 or params.rho == 0:
        return np.zeros((0, 2), dtype=np.int64)
    levels = max(1, min(int(math.ceil(math.log2(max(params.side, 2.0)))) + 1, 60 // params.d))
    codes = _sampling.morton_codes(positions, float(params.side), levels)
    layer = np.floor(np.log2(weights)).astype(np.int64)
    order = np.lexsort((np.arange(n), codes, layer))
    n_layers = int(layer.max()) + 1
    layer_start = np.searchsorted(layer[order], np.arange(n_layers + 1)).astype(np.int64)
    layer_wmax = np.ones(n_layers)
    np.maximum.at(layer_wmax, layer, weights)
    key = np.uint64(derive_key(seed, TAG_EDGES))
    u, v = _sampling.accelerated_edges(positions, weights, float(params.rho), float(params.alpha),
                                       float(params.side), params.torus, key,
                                       order.astype(np.int64), codes[order], layer_start,
                                       layer_wmax, levels, float(cutoff))
    return np.column_stack([u, v])


def sample_graph_reference(params: SfpParams, seed: int,
                           max_vertices: float = REFERENCE_MAX_VERTICES) -> SfpGraph:
    """Exact-law graph: every pair gets its own Bernoulli(p_xy) draw."""
    if params.volume > max_vertices:
        raise ValueError(
            f"expected vertex count {params.volume:g} exceeds the all-pairs threshold "
            f"{max_vertices:g}; use sample_graph_accelerated")
    pos = sample_points(params, seed)
    w = sample_weights(params, pos.shape[0], seed)
    e = sample_edges_reference(params, pos, w, seed)
    g = _csr_graph(params, pos, w, e[:, 0], e[:, 1], int(seed), "reference")
    return g


def sample_graph_accelerated(params: SfpParams, seed: int, cutoff: float = NEGLIGIBLE_MASS) -> SfpGraph:
    """Same law as the reference sampler (up to ``cutoff``), in near-linear time."""
    pos = sample_points(params, seed)
    w = sample_weights(params, pos.shape[0], seed)
    e = sample_edges_accelerated(params, pos, w, seed, cutoff)
    return _csr_graph(params, pos, w, e[:, 0], e[:, 1], int(seed), "accelerated")


def sample_graph(params: SfpParams, seed: int, method: str = "accelerated") -> SfpGraph:
    if method == "reference":
        return sample_graph_reference(params, seed)
    if method == "accelerated":
        return sample_graph_accelerated(params, seed)
    raise ValueError(f"unknown sampler {method!r}")


# -- serialisation --------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_graph(g: SfpGraph, path) -> None:
    p = g.params
    seed = "none" if g.seed_record is None else str(int(g.seed_record))
    lines = [f"SFPGRAPH v1 d={p.d} alpha={_fmt(p.alpha)} tau={_fmt(p.tau)} rho={_fmt(p.rho)} "
             f"volume={_fmt(p.volume)} boundary={p.boundary} seed={seed}",
             f"V {g.n_vertices}"]
    for i in range(g.n_vertices):
        coords = " ".join(_fmt(c) for c in g.positions[i])
        lines.append(f"{i} {coords} {_fmt(g.weights[i])}")
    edges = g.edges()
    lines.append(f"E {edges.shape[0]}")
    lines.extend(f"{u} {v}" for u, v in edges.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def _lines(path) -> Iterator:
    with open(path) as fh:
        for k, line in enumerate(fh, start=1):
            yield k, line.rstrip("\n")


def deserialize_graph(path) -> SfpGraph:
    it = _lines(path)

    def nxt(what):
        try:
            return next(it)
        except StopIteration:
            raise GraphFormatError(f"unexpected end of file while reading {what}") from None

    lineno, header = nxt("header")
    toks = header.split()
    if len(toks) < 2 or toks[0] != "SFPGRAPH" or toks[1] != "v1":
        raise GraphFormatError(f"line {lineno}: expected 'SFPGRAPH v1' header")
    kv = {}
    for tok in toks[2:]:
        if "=" not in tok:
            raise GraphFormatError(f"line {lineno}: malformed header field {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    required = ("d", "alpha", "tau", "rho", "volume", "boundary", "seed")
    missing = [k for k in required if k not in kv]
    if missing:
        raise GraphFormatError(f"line {lineno}: header missing {missing}")
    try:
        params = SfpParams(d=int(kv["d"]), alpha=float(kv["alpha"]), tau=float(kv["tau"]),
                           rho=float(kv["rho"]), volume=float(kv["volume"]),
                           boundary=kv["boundary"])
        seed = None if kv["seed"] == "none" else int(kv["seed"])
    except ValueError as exc:
        raise GraphFormatError(f"line {lineno}: {exc}") from None

    def count_line(tag):
        ln, text = nxt(f"'{tag}' line")
        parts = text.split()
        if len(parts) != 2 or parts[0] != tag or not parts[1].isdigit():
            raise GraphFormatError(f"line {ln}: expected '{tag} <count>'")
        return int(parts[1])

    nv = count_line("V")
    pos = np.empty((nv, params.d))
    w = np.empty(nv)
    for i in range(nv):
        ln, text = nxt("vertex")
        parts = text.split()
        if len(parts) != params.d + 2:
            raise GraphFormatError(f"line {ln}: expected {params.d + 2} fields for a vertex")
        try:
            vid = int(parts[0])
            vals = [float(x) for x in parts[1:]]
        except ValueError:
            raise GraphFormatError(f"line {ln}: non-numeric vertex field") from None
        if vid != i:
            raise GraphFormatError(f"line {ln}: vertex id {vid} out of order (expected {i})")
        pos[i] = vals[:-1]
        w[i] = vals[-1]
        if w[i] < 1:
            raise GraphFormatError(f"line {ln}: weight {w[i]} below 1")
    ne = count_line("E")
    edges = np.empty((ne, 2), dtype=np.int64)
    for k in range(ne):
        ln, text = nxt("edge")
        parts = text.split()
        if len(parts) != 2:
            raise GraphFormatError(f"line {ln}: expected '<u> <v>'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"line {ln}: non-integer edge endpoint") from None
        if not (0 <= u < v < nv):
            raise GraphFormatError(f"line {ln}: edge ({u}, {v}) must satisfy 0 <= u < v < {nv}")
        edges[k] = (u, v)
    for ln, text in it:
        if text.strip():
            raise GraphFormatError(f"line {ln}: trailing content")
    try:
        return graph_from_edges(params, pos, w, edges, seed_record=seed, sampler="file")
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None


def induced_subgraph_edges(g: SfpGraph, vertices: Sequence[int]) -> np.ndarray:
    """Edges of ``g`` with both endpoints in ``vertices`` (original ids)."""
    keep = np.zeros(g.n_vertices, dtype=bool)
    keep[np.asarray(vertices, dtype=np.int64)] = True
    e = g.edges()
    return e[keep[e[:, 0]] & keep[e[:, 1]]]
