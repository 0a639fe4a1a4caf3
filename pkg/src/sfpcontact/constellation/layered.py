"""Layered boxes for 1 < gamma < 2.

Layer ``k`` (``0 <= k < k_n``) tiles the cube ``[0, b 2^{k_n} m^{1/d})^d``
with spatial cells of side ``b 2^{k+1}`` and keeps the vertices whose weight
lies in the band ``(e^{k L alpha/gamma}, e^{(k+1) L alpha/gamma}]``; each box
of layer ``k + 1`` is the parent of the ``2^d`` boxes of layer ``k`` it
covers. ``b`` (``cell_scale``) is 1 in the original construction; larger
values make boxes occupied at desk scale.

A top-layer box is good when the previous box of the snake chain is good, it
holds at least ``S + 1`` vertices, its heaviest vertex (its star) has at
least ``S`` neighbours in the box, and the star is adjacent to the previous
star. Lower boxes use their parent in place of the chain predecessor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..graph import SfpGraph, SfpParams
from .checker import Constellation, ConstellationParams, StagedFailure
from .partition import snake_order

_NEAR = 1e-9


@dataclass(frozen=True)
class LayeredSpec:
    a: float
    L: float
    S: float = 2.0
    cell_scale: float = 1.0

    def __post_init__(self):
        if not self.S >= 2:
            raise ValueError("S must be >= 2")
        if not self.cell_scale > 0:
            raise ValueError("cell_scale must be > 0")

    def validate(self, params: SfpParams) -> None:
        if not 0 < self.a < 1 / math.log(2):
            raise ValueError(f"a must lie in (0, 1/log 2) = (0, {1 / math.log(2):.6g})")
        lo = params.gamma / 2 * math.log(2)
        if not lo < self.L < math.log(2):
            raise ValueError(f"L must lie in ({lo:.6g}, {math.log(2):.6g})")

    def k_n(self, params: SfpParams) -> int:
        return math.floor(self.a * math.log(params.volume) / params.d)

    def boxes_per_dim_top(self, params: SfpParams) -> int:
        return math.floor(params.volume ** ((1 - self.a * math.log(2)) / params.d) / self.cell_scale)

    def m_n(self, params: SfpParams) -> int:
        return self.boxes_per_dim_top(params) ** params.d

    def eps1(self) -> float:
        return math.log(2) - self.L

    def eps2(self, params: SfpParams) -> float:
        return params.alpha * (2 * self.L / params.gamma - math.log(2))

    def band(self, params: SfpParams, k: int):
        r = self.L * params.alpha / params.gamma
        return math.exp(k * r), math.exp((k + 1) * r)

    def mu1(self, params: SfpParams, k: int) -> float:
        """Expected number of vertices in a layer-``k`` box."""
        d, L = params.d, self.L
        return self.cell_scale ** d * 2 ** d * (1 - math.exp(-d * L)) * (2 * math.exp(-L)) ** (k * d)

    def to_dict(self) -> dict:
        return {"a": self.a, "L": self.L, "S": self.S, "cell_scale": self.cell_scale}


@dataclass
class LayeredBoxes:
    params: SfpParams
    spec: LayeredSpec
    k_n: int
    per_dim: list
    sides: list
    bands: list

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def top(self) -> int:
        return self.k_n - 1

    def n_boxes(self, k: int) -> int:
        return self.per_dim[k] ** self.d

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([self.n_boxes(k) for k in range(self.k_n)])]).astype(np.int64)

    def volume(self, k: int) -> float:
        return self.sides[k] ** self.d

    def layer_of(self, weights: np.ndarray) -> np.ndarray:
        """Layer of each weight, -1 above the top band."""
        edges = np.array(self.bands)
        k = np.searchsorted(edges, np.asarray(weights, float), side="left") - 1
        k = np.maximum(k, 0)
        k[np.asarray(weights) > edges[-1]] = -1
        return k.astype(np.int64)

    def box_bounds(self, k: int, v) -> list:
        side = Fraction(self.spec.cell_scale) * 2 ** (k + 1)
        return [(vi * side, (vi + 1) * side) for vi in v]

    def _cell_index(self, x: float, k: int) -> int:
        return math.floor(Fraction(x) / (Fraction(self.spec.cell_scale) * 2 ** (k + 1)))

    def locate(self, positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Global box id (layers concatenated from 0 up) per vertex, or -1."""
        pos = np.asarray(positions, float)
        layer = self.layer_of(weights)
        out = np.full(pos.shape[0], -1, np.int64)
        off = self.offsets()
        for k in range(self.k_n):
            sel = np.flatnonzero(layer == k)
            if not sel.size:
                continue
            ratio = pos[sel] / self.sides[k]
            idx = np.floor(ratio).astype(np.int64)
            near = np.abs(ratio - np.round(ratio)) < _NEAR
            for i, j in zip(*np.nonzero(near)):
                idx[i, j] = self._cell_index(float(pos[sel[i], j]), k)
            ok = (idx < self.per_dim[k]).all(axis=1)
            out[sel[ok]] = off[k] + np.ravel_multi_index(tuple(idx[ok].T), (self.per_dim[k],) * self.d)
        return out

    def parent(self, k: int, v) -> tuple:
        return k + 1, tuple(int(x) // 2 for x in v)

    def children(self, k: int, v) -> list:
        if k == 0:
            return []
        out = []
        for e in range(1 << self.d):
            out.append(tuple(2 * int(x) + ((e >> i) & 1) for i, x in enumerate(v)))
        return [(k - 1, c) for c in out]

    def to_dict(self) -> dict:
        return {"k_n": self.k_n, "m_n": self.n_boxes(self.top), "per_dim": self.per_dim,
                "sides": self.sides, "bands": self.bands}


def build_layered_boxes(params: SfpParams, lspec: LayeredSpec) -> LayeredBoxes:
    lspec.validate(params)
    k_n = lspec.k_n(params)
    if k_n < 1:
        raise ValueError("n too small for layered construction (k_n < 1)")
    q_top = lspec.boxes_per_dim_top(params)
    if q_top < 1:
        raise ValueError("n too small for layered construction (m_n = 0)")
    per_dim = [q_top * 2 ** (k_n - 1 - k) for k in range(k_n)]
    sides = [lspec.cell_scale * 2.0 ** (k + 1) for k in range(k_n)]
    bands = [lspec.band(params, k)[0] for k in range(k_n)] + [lspec.band(params, k_n - 1)[1]]
    bands[0] = 1.0
    return LayeredBoxes(params, lspec, k_n, per_dim, sides, bands)


@dataclass
class GoodBoxReport:
    """Per-layer good-box counts and the first failing clause on the top chain."""

    good_counts: list
    box_counts: list
    top_failure: object = None

    @property
    def fractions(self) -> list:
        return [g / b if b else 0.0 for g, b in zip(self.good_counts, self.box_counts)]


def _star_table(graph: SfpGraph, box: np.ndarray, n_boxes: int):
    occ = np.bincount(box[box >= 0], minlength=n_boxes)
    star = np.full(n_boxes, -1, np.int64)
    inside = np.flatnonzero(box >= 0)
    if inside.size:
        order = np.lexsort((inside, -graph.weights[inside], box[inside]))
        b = box[inside][order]
        first = np.concatenate([[True], np.diff(b) != 0])
        star[b[first]] = inside[order][first]
    deg_in = np.zeros(n_boxes, np.int64)
    for bid in np.flatnonzero(star >= 0).tolist():
        x = star[bid]
        deg_in[bid] = int((box[graph.neighbors(x)] == bid).sum())
    return occ, star, deg_in


def extract_constellation_gamma_in_1_2(graph: SfpGraph, lspec: LayeredSpec):
    """Good-box construction; a ``Constellation`` when every top box is good.

    Either way the per-layer good-box counts ``G_k`` are attached
    (``extras['good_counts']`` or the failure's extras).
    """
    params = graph.params
    if not 1 < params.gamma < 2:
        warnings.warn(f"gamma = {params.gamma:.4g} outside (1, 2); this construction targets 1 < gamma < 2")
    try:
        lb = build_layered_boxes(params, lspec)
    except ValueError as exc:
        return StagedFailure("layers", None, str(exc))
    d, S = params.d, lspec.S
    off = lb.offsets()
    box = lb.locate(graph.positions, graph.weights)
    occ, star, deg_in = _star_table(graph, box, int(off[-1]))
    good = np.zeros(int(off[-1]), bool)
    base_ok = (occ >= S + 1) & (deg_in >= S)

    top = lb.top
    q = lb.per_dim[top]
    sigma = snake_order(q, d)
    sig_flat = off[top] + np.ravel_multi_index(tuple(sigma.T), (q,) * d)
    failure = None
    chain_edges = []
    for i, bid in enumerate(sig_flat.tolist()):
        if occ[bid] < S + 1:
            failure = ("occupancy", i, f"top box sigma({i}) holds {occ[bid]} < S+1 vertices")
        elif deg_in[bid] < S:
            failure = ("star_degree", i, f"star of top box sigma({i}) has {deg_in[bid]} < S in-box neighbours")
        elif i > 0 and not graph.has_edge(int(star[bid]), int(star[sig_flat[i - 1]])):
            failure = ("chain_edge", i, f"stars of sigma({i - 1}) and sigma({i}) are not adjacent")
        if failure is not None:
            break
        good[bid] = True
        if i > 0:
            chain_edges.append((int(star[sig_flat[i - 1]]), int(star[bid])))

    tree_edges = list(chain_edges)
    for k in range(top - 1, -1, -1):
        qk = lb.per_dim[k]
        ids = np.arange(lb.n_boxes(k))
        v = np.array(np.unravel_index(ids, (qk,) * d)).T
        pid = off[k + 1] + np.ravel_multi_index(tuple((v // 2).T), (lb.per_dim[k + 1],) * d)
        bid = off[k] + ids
        cand = good[pid] & base_ok[bid]
        for b, p in zip(bid[cand].tolist(), pid[cand].tolist()):
            if graph.has_edge(int(star[b]), int(star[p])):
                good[b] = True
                tree_edges.append((int(star[p]), int(star[b])))

    counts = [int(good[off[k]:off[k + 1]].sum()) for k in range(lb.k_n)]
    boxes = [lb.n_boxes(k) for k in range(lb.k_n)]
    extras = {"layers": lb.to_dict(), "good_counts": counts, "box_counts": boxes}
    if failure is not None:
        stage, witness, detail = failure
        return StagedFailure(stage, {"layer": top, "chain_index": witness,
                                     "box": sigma[witness].tolist()}, detail, extras)

    star_edges = list(tree_edges)
    n_leaves = math.ceil(S)
    stars = [int(star[b]) for b in sig_flat.tolist()]
    stars += [int(star[b]) for k in range(top - 1, -1, -1)
              for b in range(int(off[k]), int(off[k + 1])) if good[b]]
    vertices = set(stars)
    for x in stars:
        bid = box[x]
        nb = [y for y in graph.neighbors(x).tolist() if box[y] == bid]
        nb.sort(key=lambda y: (-graph.weights[y], y))
        for y in nb[:n_leaves]:
            vertices.add(y)
            tree_edges.append((x, y))
    tree_edges = sorted((min(a, b), max(a, b)) for a, b in tree_edges)
    cp = ConstellationParams(S, 1, 2 ** d + 2)
    con = Constellation(sorted(vertices), tree_edges, stars, [[a, b] for a, b in star_edges], cp, extras)
    verdict = con.verify()
    if not verdict:
        return StagedFailure("assembly", verdict.witness, f"{verdict.prop}: {verdict.detail}", extras)
    return con


def good_box_report(result) -> GoodBoxReport:
    ex = result.extras
    fail = result if isinstance(result, StagedFailure) else None
    return GoodBoxReport(ex.get("good_counts", []), ex.get("box_counts", []), fail)
