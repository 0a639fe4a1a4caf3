"""Star and path pipeline for gamma > 2.

Stars are the heaviest vertices of the coarse cells. Consecutive stars in the
chain order are joined by shortest paths that stay inside the two cells and,
apart from their endpoints, use only the largest components of fine cells of
one chessboard colour; the colour alternates along the chain, so paths
sharing a coarse cell cannot meet except at the common star.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..graph import SfpGraph
from .checker import Constellation, ConstellationParams, StagedFailure, Verdict, validate_paths
from .partition import BoxPartition, PartitionSpec, build_partition


@dataclass
class FineComponents:
    """Largest component of the induced subgraph on every fine cell.

    ``fine_id`` is the fine cell of each vertex (-1 in the margin),
    ``in_largest`` marks vertices of their cell's largest component and
    ``sizes`` has one entry per fine cell (0 when empty).
    """

    fine_id: np.ndarray
    in_largest: np.ndarray
    sizes: np.ndarray
    members: dict
    n_margin: int

    def component(self, j: int) -> np.ndarray:
        return self.members.get(int(j), np.zeros(0, np.int64))


def components_by_label(n: int, edges_u, edges_v, labels: np.ndarray, n_labels: int):
    """Largest component within each label class; ties go to the smallest min id.

    Only edges with equal labels on both ends count. Vertices with a
    negative label are ignored.
    """
    keep = (labels[edges_u] == labels[edges_v]) & (labels[edges_u] >= 0)
    a = sp.coo_matrix((np.ones(int(keep.sum())), (edges_u[keep], edges_v[keep])), shape=(n, n))
    _, comp = connected_components(a, directed=False)
    valid = labels >= 0
    ids = np.arange(n)
    members = {}
    sizes = np.zeros(n_labels, np.int64)
    in_largest = np.zeros(n, bool)
    if not valid.any():
        return members, sizes, in_largest
    # sort by (label, comp, id) so each component is a contiguous run
    order = np.lexsort((ids[valid], comp[valid], labels[valid]))
    vs = ids[valid][order]
    lab = labels[vs]
    cmp_ = comp[vs]
    brk = np.flatnonzero((np.diff(lab) != 0) | (np.diff(cmp_) != 0)) + 1
    starts = np.concatenate([[0], brk])
    stops = np.concatenate([brk, [vs.shape[0]]])
    best = {}
    for a0, b0 in zip(starts.tolist(), stops.tolist()):
        j = int(lab[a0])
        size = b0 - a0
        key = (size, -int(vs[a0]))
        if j not in best or key > best[j][0]:
            best[j] = (key, a0, b0)
    for j, (_, a0, b0) in best.items():
        run = np.sort(vs[a0:b0])
        members[j] = run
        sizes[j] = run.shape[0]
        in_largest[run] = True
    return members, sizes, in_largest


def component_per_fine_cell(graph: SfpGraph, partition: BoxPartition) -> FineComponents:
    fine = partition.fine_ids(graph.positions)
    e = graph.edges()
    members, sizes, in_largest = components_by_label(graph.n_vertices, e[:, 0], e[:, 1], fine, partition.m_f)
    return FineComponents(fine, in_largest, sizes, members, int((fine < 0).sum()))


def _resolve(spec: PartitionSpec, partition: BoxPartition) -> PartitionSpec:
    return spec.resolved(partition.params) if spec.mode == "paper_faithful" else spec


def check_E1(components: FineComponents, partition: BoxPartition, spec: PartitionSpec) -> Verdict:
    """Every fine cell's largest component has size in (beta1 F, beta2 F), F = (log n)^{nu_p}."""
    F = partition.fine_scale
    lo, hi = spec.beta1 * F, spec.beta2 * F
    sizes = components.sizes
    bad = np.flatnonzero(~((sizes > lo) & (sizes < hi)))
    if bad.size:
        j = int(bad[0])
        return Verdict(False, "E1", j, f"|C_{j}| = {int(sizes[j])} outside ({lo:.6g}, {hi:.6g})")
    return Verdict(True)


def find_stars(graph: SfpGraph, partition: BoxPartition) -> np.ndarray:
    """Heaviest vertex of each coarse cell, in chain order; ties to the smallest id."""
    coarse = partition.coarse_ids(graph.positions)
    pos_in_chain = partition.snake_position()
    m = partition.m_c
    stars = np.full(m, -1, np.int64)
    inside = np.flatnonzero(coarse >= 0)
    if inside.size:
        chain = pos_in_chain[coarse[inside]]
        order = np.lexsort((inside, -graph.weights[inside], chain))
        first = np.concatenate([[True], np.diff(chain[order]) != 0])
        stars[chain[order][first]] = inside[order][first]
    empty = np.flatnonzero(stars < 0)
    if empty.size:
        raise ValueError(f"empty coarse cells at chain positions {empty[:20].tolist()}"
                         + (" ..." if empty.size > 20 else ""))
    return stars


def check_E2(stars: np.ndarray, weights: np.ndarray, components: FineComponents,
             partition: BoxPartition, spec: PartitionSpec) -> Verdict:
    """Stars are heavier than (log n)^eta and lie in their fine cell's largest component."""
    wmin = partition.log_n ** spec.eta
    for i, x in enumerate(stars.tolist()):
        if not weights[x] > wmin:
            return Verdict(False, "E2", i, f"star {x} has weight {weights[x]:.6g} <= {wmin:.6g}")
        if components.fine_id[x] < 0:
            return Verdict(False, "E2", i, f"star {x} lies in the uncovered margin")
        if not components.in_largest[x]:
            return Verdict(False, "E2", i, f"star {x} is outside the largest component of its fine cell")
    return Verdict(True)


def check_E_star(graph: SfpGraph, stars: np.ndarray, partition: BoxPartition,
                 spec: PartitionSpec) -> Verdict:
    """Each star has at least c2 (log n)^{nu_s} neighbours in its own coarse cell."""
    need = spec.c2 * partition.log_n ** spec.nu_s
    coarse = partition.coarse_ids(graph.positions)
    for i, x in enumerate(stars.tolist()):
        nb = graph.neighbors(x)
        k = int((coarse[nb] == coarse[x]).sum())
        if k < need:
            return Verdict(False, "E_star", i, f"star {x} has {k} neighbours in its cell, need {need:.6g}")
    return Verdict(True)


def path_bound(partition: BoxPartition, spec: PartitionSpec) -> int:
    return max(1, math.floor(spec.c3 * partition.fine_scale))


@dataclass
class PathFailure:
    pair: tuple
    best_length: Optional[int]
    detail: str


def _bfs_path(graph: SfpGraph, a: int, b: int, allowed: np.ndarray):
    prev = {a: -1}
    queue = deque([a])
    while queue:
        x = queue.popleft()
        if x == b:
            path = [b]
            while prev[path[-1]] >= 0:
                path.append(prev[path[-1]])
            return path[::-1]
        for y in graph.neighbors(x).tolist():
            if y not in prev and allowed[y]:
                prev[y] = x
                queue.append(y)
    return None


def build_star_paths(graph: SfpGraph, partition: BoxPartition, stars: np.ndarray,
                     spec: PartitionSpec, components: Optional[FineComponents] = None):
    """Paths between consecutive stars, or a ``PathFailure`` for the first pair that has none.

    Path ``i`` joins stars ``i`` and ``i + 1`` through vertices of the two
    coarse cells that belong to largest fine components of colour ``i % 2``.
    """
    if components is None:
        components = component_per_fine_cell(graph, partition)
    bound = path_bound(partition, spec)
    coarse = partition.coarse_ids(graph.positions)
    chain = np.full(graph.n_vertices, -1, np.int64)
    inside = coarse >= 0
    chain[inside] = partition.snake_position()[coarse[inside]]
    g = partition.locate(graph.positions)
    colour = np.where(g[:, 0] >= 0, partition.color(g), -1) if g.shape[0] else np.zeros(0, np.int64)
    paths = []
    for i in range(stars.shape[0] - 1):
        allowed = components.in_largest & (colour == i % 2) & ((chain == i) | (chain == i + 1))
        allowed[stars[i]] = allowed[stars[i + 1]] = True
        path = _bfs_path(graph, int(stars[i]), int(stars[i + 1]), allowed)
        if path is None:
            return PathFailure((i, i + 1), None, "stars not connected within the colour class")
        if len(path) - 1 > bound:
            return PathFailure((i, i + 1), len(path) - 1, f"shortest path {len(path) - 1} > bound {bound}")
        paths.append(path)
    return paths


def _assemble(graph: SfpGraph, stars: np.ndarray, paths: list, coarse: np.ndarray, n_leaves: int):
    used = set()
    edges = set()
    for p in paths:
        used.update(p)
        edges.update((min(a, b), max(a, b)) for a, b in zip(p, p[1:]))
    used.update(stars.tolist())
    w = graph.weights
    for x in stars.tolist():
        nb = [y for y in graph.neighbors(x).tolist() if coarse[y] == coarse[x] and y not in used]
        nb.sort(key=lambda y: (-w[y], y))
        for y in nb[:n_leaves]:
            used.add(y)
            edges.add((min(x, y), max(x, y)))
    # spanning tree of the union by BFS from the first star
    adj = {v: [] for v in used}
    for a, b in sorted(edges):
        adj[a].append(b)
        adj[b].append(a)
    root = int(stars[0])
    seen = {root}
    tree = []
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                tree.append((min(x, y), max(x, y)))
                queue.append(y)
    return sorted(seen), sorted(tree)


def extract_constellation_gamma_gt2(graph: SfpGraph, spec: PartitionSpec):
    """Run the full pipeline; returns a ``Constellation`` or a ``StagedFailure``."""
    params = graph.params
    if params.gamma <= 2:
        warnings.warn(f"gamma = {params.gamma:.4g} <= 2; this construction targets gamma > 2")
    try:
        partition = build_partition(params, spec)
    except ValueError as exc:
        return StagedFailure("partition", None, str(exc))
    spec = _resolve(spec, partition)
    info = {"partition": partition.to_dict()}
    comps = component_per_fine_cell(graph, partition)
    info["margin_vertices"] = comps.n_margin
    v = check_E1(comps, partition, spec)
    if not v:
        return StagedFailure("E1", v.witness, v.detail, info)
    try:
        stars = find_stars(graph, partition)
    except ValueError as exc:
        return StagedFailure("stars", None, str(exc), info)
    v = check_E2(stars, graph.weights, comps, partition, spec)
    if not v:
        return StagedFailure("E2", v.witness, v.detail, info)
    v = check_E_star(graph, stars, partition, spec)
    if not v:
        return StagedFailure("E_star", v.witness, v.detail, info)
    paths = build_star_paths(graph, partition, stars, spec, comps)
    if isinstance(paths, PathFailure):
        return StagedFailure("E_path", list(paths.pair), paths.detail,
                             dict(info, best_length=paths.best_length))
    S = max(2.0, 2 * spec.c2 * partition.log_n ** spec.nu_s)
    D = path_bound(partition, spec)
    cp = ConstellationParams(S, D, 2)
    coarse = partition.coarse_ids(graph.positions)
    vertices, tree = _assemble(graph, stars, paths, coarse, math.floor(S))
    adj = {x: set(graph.neighbors(x).tolist()) for x in vertices}
    msg = validate_paths(paths, [(int(a), int(b)) for a, b in zip(stars, stars[1:])], adj, D)
    if msg is not None:
        return StagedFailure("assembly", None, msg, info)
    con = Constellation(vertices, tree, stars.tolist(), paths, cp, info)
    verdict = con.verify()
    if not verdict:
        return StagedFailure("assembly", verdict.witness, f"{verdict.prop}: {verdict.detail}", info)
    return con
