"""(S, D, Delta)-constellations and their verification.

A constellation is a tree G with an ordered set J of distinguished vertices
(stars). Two stars are *-adjacent when the tree path between them meets no
other star; the reduced graph G' on J joins *-adjacent stars.

  P1  G is a connected tree
  P2  deg_G(x) >= S/2 for every x in J
  P3  dist_G(x, y) <= D whenever x *~ y
  P4  G' is a connected tree of maximum degree <= Delta
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


@dataclass(frozen=True)
class ConstellationParams:
    S: float
    D: int
    Delta: int

    def __post_init__(self):
        if not self.S >= 2:
            raise ValueError(f"S must be >= 2, got {self.S}")
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be an integer >= 1, got {self.D}")
        if int(self.Delta) != self.Delta or self.Delta < 2:
            raise ValueError(f"Delta must be an integer >= 2, got {self.Delta}")

    def to_dict(self) -> dict:
        return {"S": self.S, "D": int(self.D), "Delta": int(self.Delta)}


@dataclass(frozen=True)
class Verdict:
    """Outcome of ``is_constellation``; falsy on failure.

    ``prop`` names the first failed property (P1..P4) and ``witness`` the
    offending vertex, pair or count.
    """

    ok: bool
    prop: Optional[str] = None
    witness: object = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "property": self.prop, "witness": self.witness, "detail": self.detail}


def _adjacency(vertices, edges):
    adj = {v: [] for v in vertices}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return adj


def _tree_failure(vertices, edges) -> Optional[Verdict]:
    vs = set(vertices)
    seen = set()
    for u, v in edges:
        if u not in vs or v not in vs:
            return Verdict(False, "P1", (u, v), "edge endpoint outside the vertex set")
        if u == v:
            return Verdict(False, "P1", (u, v), "self-loop")
        key = (min(u, v), max(u, v))
        if key in seen:
            return Verdict(False, "P1", key, "duplicate edge")
        seen.add(key)
    if not vs:
        return Verdict(False, "P1", None, "empty graph")
    if len(seen) != len(vs) - 1:
        return Verdict(False, "P1", len(seen),
                       f"{len(seen)} edges on {len(vs)} vertices, a tree has {len(vs) - 1}")
    adj = _adjacency(vs, seen)
    start = next(iter(vs))
    reached = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in reached:
                reached.add(y)
                queue.append(y)
    if len(reached) != len(vs):
        missing = min(vs - reached)
        return Verdict(False, "P1", missing, "graph is disconnected")
    return None


def star_neighbours(adj, J: Sequence[int]) -> dict:
    """For each star, the stars reachable without crossing another star, with distances."""
    stars = set(J)
    out = {}
    for x in J:
        dist = {x: 0}
        found = {}
        queue = deque([x])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                if b in dist:
                    continue
                dist[b] = dist[a] + 1
                if b in stars:
                    found[b] = dist[b]
                else:
                    queue.append(b)
        out[x] = found
    return out


def is_constellation(vertices: Iterable[int], edges: Iterable, J: Sequence[int],
                     params: ConstellationParams) -> Verdict:
    vertices = [int(v) for v in vertices]
    edges = [(int(u), int(v)) for u, v in edges]
    J = [int(x) for x in J]
    if not J:
        raise ValueError("J must be nonempty")
    if not set(J) <= set(vertices):
        raise ValueError("J must be a subset of the vertex set")
    if len(set(J)) != len(J):
        raise ValueError("J has repeated vertices")
    bad = _tree_failure(vertices, edges)
    if bad is not None:
        return bad
    adj = _adjacency(vertices, edges)
    for x in J:
        if len(adj[x]) < params.S / 2:
            return Verdict(False, "P2", x, f"deg({x}) = {len(adj[x])} < S/2 = {params.S / 2}")
    near = star_neighbours(adj, J)
    for x in J:
        for y in sorted(near[x]):
            if x < y and near[x][y] > params.D:
                return Verdict(False, "P3", (x, y), f"dist = {near[x][y]} > D = {params.D}")
    red_edges = [(x, y) for x in J for y in near[x] if x < y]
    bad = _tree_failure(J, red_edges)
    if bad is not None:
        return Verdict(False, "P4", bad.witness, "reduced graph: " + bad.detail)
    for x in J:
        if len(near[x]) > params.Delta:
            return Verdict(False, "P4", x, f"reduced degree {len(near[x])} > Delta = {params.Delta}")
    return Verdict(True)


@dataclass
class Constellation:
    vertices: list
    edges: list
    J: list
    paths: list
    params: ConstellationParams
    extras: dict = field(default_factory=dict)

    def verify(self) -> Verdict:
        return is_constellation(self.vertices, self.edges, self.J, self.params)

    def to_json(self) -> dict:
        out = {"params": self.params.to_dict(), "J": [int(x) for x in self.J],
               "paths": [[int(v) for v in p] for p in self.paths],
               "tree_edges": [[int(u), int(v)] for u, v in self.edges]}
        out.update(self.extras)
        return out


@dataclass
class StagedFailure:
    stage: str
    witness: object
    detail: str
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"stage": self.stage, "witness": self.witness, "detail": self.detail}
        out.update(self.extras)
        return out


def validate_paths(paths: Sequence[Sequence[int]], endpoints: Sequence, adj, max_len: int):
    """Independent check of a family of star-to-star paths.

    Each path must be simple, run between its prescribed endpoints along
    edges of ``adj`` and have at most ``max_len`` edges; paths may share
    only endpoints. Returns ``None`` or a message naming the first problem.
    """
    owner = {}
    ends = set(v for e in endpoints for v in e)
    for k, (p, (a, b)) in enumerate(zip(paths, endpoints)):
        if not p or p[0] != a or p[-1] != b:
            return f"path {k} does not join {a} and {b}"
        if len(set(p)) != len(p):
            return f"path {k} is not simple"
        if len(p) - 1 > max_len:
            return f"path {k} has length {len(p) - 1} > {max_len}"
        for u, v in zip(p, p[1:]):
            if v not in adj[u]:
                return f"path {k} uses non-edge ({u}, {v})"
        for v in p[1:-1]:
            if v in ends:
                return f"path {k} passes through star {v}"
            if v in owner:
                return f"paths {owner[v]} and {k} share vertex {v}"
            owner[v] = k
    return None
