"""Estimators tying simulation output to the model's scaling laws.

Degree tails assume a pure power law P(D > s) ~ s^{-gamma}; the slowly
varying correction is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.special import gamma as gamma_fn

from .graph import SfpGraph, SfpParams, sample_graph, sample_graph_reference

HILL_DEFAULT_FRACTION = 0.01
HILL_SWEEP = (0.005, 0.01, 0.05)


@dataclass(frozen=True)
class TailFit:
    estimator: str
    exponent: float
    ci_low: float
    ci_high: float
    tail_fraction: float
    k: int

    def to_dict(self) -> dict:
        return asdict(self)


def hill_estimate(sample, tail_fraction: float = HILL_DEFAULT_FRACTION) -> TailFit:
    """Hill estimator of the tail index from the top ``tail_fraction`` of ``sample``."""
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5]")
    x = np.sort(np.asarray(sample, float))[::-1]
    k = int(math.floor(tail_fraction * x.shape[0]))
    if k < 2:
        raise ValueError("too few observations in the tail")
    threshold = x[k]
    if threshold <= 0 or x[0] <= threshold:
        raise ValueError("degenerate tail: no spread above the threshold")
    mean_log = np.mean(np.log(x[:k] / threshold))
    if mean_log <= 0:
        raise ValueError("degenerate tail: no spread above the threshold")
    g = 1.0 / mean_log
    half = 1.96 * g / math.sqrt(k)
    return TailFit("hill", float(g), float(g - half), float(g + half), tail_fraction, k)


def loglog_tail_fit(sample, tail_fraction: float = HILL_DEFAULT_FRACTION) -> TailFit:
    """Least-squares slope of the empirical log-CCDF over the top tail."""
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5]")
    x = np.sort(np.asarray(sample, float))[::-1]
    k = int(math.floor(tail_fraction * x.shape[0]))
    top = x[:k]
    if k < 3 or np.unique(top).shape[0] < 3:
        raise ValueError("degenerate tail: fewer than 3 distinct values")
    ccdf = np.arange(1, k + 1) / x.shape[0]
    slope, intercept = np.polyfit(np.log(top), np.log(ccdf), 1)
    resid = np.log(ccdf) - (slope * np.log(top) + intercept)
    se = math.sqrt(np.sum(resid ** 2) / (k - 2) / np.sum((np.log(top) - np.log(top).mean()) ** 2))
    g = -float(slope)
    return TailFit("log_log_regression", g, g - 1.96 * se, g + 1.96 * se, tail_fraction, k)


def degree_tail_fit(graph: SfpGraph, tail_fraction: float = HILL_DEFAULT_FRACTION,
                    estimator: str = "hill") -> TailFit:
    if graph.n_vertices < 100:
        raise ValueError("degree_tail_fit needs at least 100 vertices")
    deg = graph.degrees()
    if estimator == "hill":
        return hill_estimate(deg, tail_fraction)
    if estimator == "log_log_regression":
        return loglog_tail_fit(deg, tail_fraction)
    raise ValueError(f"unknown estimator {estimator!r}")


def hill_sensitivity(graph: SfpGraph, fractions: Sequence[float] = HILL_SWEEP) -> list:
    return [degree_tail_fit(graph, f) for f in fractions]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n_bins: int

    def to_dict(self) -> dict:
        return asdict(self)


def _ols(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def degree_weight_scaling(graph: SfpGraph, n_bins: int = 20, min_count: int = 5,
                          min_bins: int = 10) -> SlopeFit:
    """Slope of log(mean degree) against log(weight) over log-spaced weight bins.

    Bins with fewer than ``min_count`` vertices or zero mean degree are
    dropped; fewer than ``min_bins`` remaining is an error.
    """
    w = np.asarray(graph.weights, float)
    deg = graph.degrees().astype(float)
    if w.size == 0 or w.max() <= w.min():
        raise ValueError("insufficient weight bins: weights are all equal")
    edges = np.geomspace(w.min(), w.max() * (1 + 1e-12), n_bins + 1)
    which = np.clip(np.searchsorted(edges, w, side="right") - 1, 0, n_bins - 1)
    cnt = np.bincount(which, minlength=n_bins)
    sum_d = np.bincount(which, deg, minlength=n_bins)
    sum_lw = np.bincount(which, np.log(w), minlength=n_bins)
    ok = (cnt >= min_count) & (sum_d > 0)
    if ok.sum() < min_bins:
        raise ValueError(f"insufficient weight bins: {int(ok.sum())} occupied, need {min_bins}")
    slope, intercept, r2 = _ols(sum_lw[ok] / cnt[ok], np.log(sum_d[ok] / cnt[ok]))
    return SlopeFit(slope, intercept, r2, int(ok.sum()))


@dataclass(frozen=True)
class DistanceSample:
    u: int
    v: int
    euclidean: float
    hops: Optional[int]

    @property
    def reachable(self) -> bool:
        return self.hops is not None


def _adjacency_matrix(graph: SfpGraph) -> csr_matrix:
    n = graph.n_vertices
    return csr_matrix((np.ones(graph.indices.shape[0]), graph.indices, graph.indptr), shape=(n, n))


def components(graph: SfpGraph) -> np.ndarray:
    _, labels = connected_components(_adjacency_matrix(graph), directed=False)
    return labels


def largest_component(graph: SfpGraph) -> np.ndarray:
    labels = components(graph)
    sizes = np.bincount(labels)
    return np.flatnonzero(labels == int(np.argmax(sizes)))


def chemical_distance_sample(graph: SfpGraph, n_pairs: int, seed: int,
                             within_largest: bool = True) -> list:
    """Graph and Euclidean distances for uniformly drawn vertex pairs.

    Pairs come from the largest component by default, otherwise from all
    vertices, in which case unreachable pairs carry ``hops=None``.
    """
    if graph.n_vertices < 2:
        return []
    pool = largest_component(graph) if within_largest else np.arange(graph.n_vertices)
    if pool.shape[0] < 2:
        return []
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pairs = np.array([rng.choice(pool, 2, replace=False) for _ in range(n_pairs)], np.int64)
    sources, inv = np.unique(pairs[:, 0], return_inverse=True)
    dist = shortest_path(_adjacency_matrix(graph), method="D", unweighted=True, directed=False,
                         indices=sources)
    side = graph.params.side
    out = []
    for k, (u, v) in enumerate(pairs.tolist()):
        h = dist[inv[k], v]
        diff = np.abs(graph.positions[u] - graph.positions[v])
        if graph.params.torus:
            diff = np.minimum(diff, side - diff)
        out.append(DistanceSample(u, v, float(np.sqrt(np.sum(diff ** 2))),
                                  None if not np.isfinite(h) else int(h)))
    return out


def largest_component_fraction(graph: SfpGraph) -> float:
    if graph.n_vertices == 0:
        raise ValueError("empty graph")
    return float(np.bincount(components(graph)).max() / graph.n_vertices)


def coupled_rho_family(params: SfpParams, rhos: Sequence[float], seed: int) -> list:
    """Reference-sampled graphs at several rho sharing points, weights and edge uniforms.

    The edge of each pair is present when its uniform falls below the
    connection probability, so the graphs are nested in rho.
    """
    return [sample_graph_reference(params.replace(rho=float(r)), seed) for r in rhos]


# -- mean degree ------------------------------------------------------------

def weight_moment(tau: float, s: float) -> float:
    """E[W^s] for Pareto(tau) weights on [1, inf); finite for s < tau - 1."""
    if not s < tau - 1:
        return math.inf
    return (tau - 1) / (tau - 1 - s)


def expected_degree_given_weight(w, d: int, alpha: float, tau: float, rho: float):
    """Infinite-volume E[deg | W = w] = v_d Gamma(1 - d/alpha) (rho w)^{d/alpha} E[W^{d/alpha}]."""
    if not alpha > d:
        return math.inf
    s = d / alpha
    v_d = math.pi ** (d / 2) / gamma_fn(d / 2 + 1)
    return v_d * gamma_fn(1 - s) * (rho * np.asarray(w, float)) ** s * weight_moment(tau, s)


def mean_degree_infinite_volume(d: int, alpha: float, tau: float, rho: float) -> float:
    s = d / alpha
    return float(expected_degree_given_weight(1.0, d, alpha, tau, rho) * weight_moment(tau, s))


def rho_for_mean_degree(d: int, alpha: float, tau: float, target: float) -> float:
    base = mean_degree_infinite_volume(d, alpha, tau, 1.0)
    return (target / base) ** (alpha / d)


def calibrate_rho(params: SfpParams, target: float, seed: int, rounds: int = 2) -> float:
    """Rho giving mean degree ``target`` in the finite box (boundary losses included).

    Starts from the infinite-volume value and rescales by
    ``(target / measured)^{alpha/d}`` on pilot graphs.
    """
    rho = rho_for_mean_degree(params.d, params.alpha, params.tau, target)
    for r in range(rounds):
        g = sample_graph(params.replace(rho=rho), seed + r)
        measured = 2 * g.n_edges / max(g.n_vertices, 1)
        rho *= (target / measured) ** (params.alpha / params.d)
    return rho


# -- extinction-time scaling -----------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    predictor: str
    slope: float
    intercept: float
    r2: float
    n_points: int
    lower_bound_only: bool
    points: tuple = field(default=())

    def to_dict(self) -> dict:
        out = asdict(self)
        out["points"] = [list(p) for p in self.points]
        return out


def _tau_arrays(rows):
    if isinstance(rows, tuple) and len(rows) == 2:
        taus, cens = rows
        return np.asarray(taus, float), np.asarray(cens, bool)
    taus = np.array([r.tau for r in rows], float)
    cens = np.array([r.censored for r in rows], bool)
    return taus, cens


def censored_median(taus, censored):
    """Median extinction time and whether it is only a lower bound.

    Censored values sit at the horizon, above every observed value, so the
    median is exact while fewer than half of the replicas are censored.
    """
    taus = np.asarray(taus, float)
    cens = np.asarray(censored, bool)
    return float(np.median(taus)), bool(cens.mean() >= 0.5)


def extinction_scaling_fit(results: Mapping, predictor: str = "n", A: Optional[float] = None,
                           allow_censored: bool = False) -> ScalingFit:
    """Least-squares fit of log(median tau) against ``n`` or ``n / (log n)^A``.

    ``results`` maps n to replica results (objects with ``tau`` and
    ``censored``) or to a ``(taus, censored)`` pair. A size with half or more
    of its replicas censored is an error unless ``allow_censored``, in which
    case the fit is flagged as a lower bound.
    """
    if len(results) < 4:
        raise ValueError("need at least 4 values of n")
    if predictor not in ("n", "n_over_logA"):
        raise ValueError("predictor must be 'n' or 'n_over_logA'")
    if predictor == "n_over_logA" and A is None:
        raise ValueError("predictor n_over_logA needs A")
    xs, ys, pts = [], [], []
    lower = False
    for n in sorted(results):
        taus, cens = _tau_arrays(results[n])
        med, is_lb = censored_median(taus, cens)
        if is_lb and not allow_censored:
            raise ValueError(f"excessive censoring at n={n}: {cens.mean():.0%} of replicas censored")
        lower |= is_lb
        x = float(n) if predictor == "n" else n / math.log(n) ** A
        xs.append(x)
        ys.append(math.log(med))
        pts.append((float(n), x, med, float(cens.mean())))
    slope, intercept, r2 = _ols(xs, ys)
    return ScalingFit(predictor, slope, intercept, r2, len(xs), lower, tuple(pts))
