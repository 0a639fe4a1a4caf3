import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sfpcontact.analysis import (censored_median, chemical_distance_sample, degree_tail_fit,
                                 degree_weight_scaling, expected_degree_given_weight,
                                 extinction_scaling_fit, hill_estimate, hill_sensitivity,
                                 largest_component_fraction, loglog_tail_fit,
                                 mean_degree_infinite_volume, rho_for_mean_degree, weight_moment)
from sfpcontact.graph import SfpParams, graph_from_edges, sample_graph


def pareto(index, n, seed):
    return np.random.default_rng(seed).random(n) ** (-1.0 / index)


# -- tail estimators -------------------------------------------------------

@pytest.mark.parametrize("index", [1.2, 1.5, 2.5, 4.5])
def test_hill_recovers_pareto_index(index):
    fit = hill_estimate(pareto(index, 200_000, 1), 0.01)
    assert fit.k == 2000
    assert abs(fit.exponent - index) < 4 * index / math.sqrt(fit.k)
    assert fit.ci_low < index < fit.ci_high


@pytest.mark.parametrize("index", [1.5, 2.5])
def test_loglog_recovers_pareto_index(index):
    fit = loglog_tail_fit(pareto(index, 200_000, 2), 0.01)
    assert abs(fit.exponent - index) < 0.15 * index


def test_tail_estimators_reject_degenerate_samples():
    with pytest.raises(ValueError, match="degenerate"):
        hill_estimate(np.ones(1000), 0.05)
    with pytest.raises(ValueError, match="too few"):
        hill_estimate(np.arange(1, 50), 0.01)
    with pytest.raises(ValueError, match="degenerate"):
        loglog_tail_fit(np.ones(1000), 0.05)
    with pytest.raises(ValueError):
        hill_estimate(np.arange(1, 50), 0.9)


@given(st.floats(1.1, 5.0), st.floats(0.5, 20.0))
def test_hill_is_scale_invariant(index, scale):
    x = pareto(index, 5000, 3)
    a, b = hill_estimate(x, 0.05), hill_estimate(scale * x, 0.05)
    assert a.exponent == pytest.approx(b.exponent, rel=1e-9)


def test_degree_tail_needs_vertices():
    g = graph_from_edges(SfpParams(1, 2.0, 2.5, 1.0, 100.0), np.arange(10.0), np.ones(10), [])
    with pytest.raises(ValueError, match="100"):
        degree_tail_fit(g)
    with pytest.raises(ValueError, match="estimator"):
        degree_tail_fit(sample_graph(SfpParams(1, 2.0, 2.5, 1.0, 500.0), 1), estimator="mle")


def test_hill_sensitivity_sweep():
    g = sample_graph(SfpParams(2, 2.5, 2.2, 0.05, 20_000.0), 4)
    fits = hill_sensitivity(g)
    assert [f.tail_fraction for f in fits] == [0.005, 0.01, 0.05]
    assert all(0.8 < f.exponent < 2.5 for f in fits)


# -- degree against weight ----------------------------------------------------

def test_degree_weight_slope_on_sfp():
    g = sample_graph(SfpParams(2, 2.5, 2.2, 0.05, 20_000.0), 5)
    fit = degree_weight_scaling(g)
    assert abs(fit.slope - 2 / 2.5) < 0.15


def test_degree_weight_needs_spread():
    g = graph_from_edges(SfpParams(1, 2.0, 2.5, 1.0, 100.0), np.arange(10.0), np.ones(10), [(0, 1)])
    with pytest.raises(ValueError, match="insufficient weight bins"):
        degree_weight_scaling(g)
    g = graph_from_edges(SfpParams(1, 2.0, 2.5, 1.0, 100.0), np.arange(10.0),
                         np.linspace(1, 5, 10), [(0, 1)])
    with pytest.raises(ValueError, match="insufficient weight bins"):
        degree_weight_scaling(g)


def test_weight_moment_closed_form():
    assert weight_moment(3.0, 1.0) == pytest.approx(2.0)
    assert weight_moment(2.2, 0.8) == pytest.approx(1.2 / 0.4)
    assert weight_moment(2.0, 1.0) == math.inf


def test_mean_degree_formula_against_simulation():
    # alpha well above d so the mass beyond the torus half-side is negligible
    d, alpha, tau = 2, 4.0, 4.0
    rho = rho_for_mean_degree(d, alpha, tau, 10.0)
    assert mean_degree_infinite_volume(d, alpha, tau, rho) == pytest.approx(10.0)
    means = [2 * g.n_edges / g.n_vertices
             for g in (sample_graph(SfpParams(d, alpha, tau, rho, 5000.0, boundary="torus"), s)
                       for s in range(8))]
    m = np.mean(means)
    assert abs(m - 10.0) < max(4 * np.std(means, ddof=1) / math.sqrt(len(means)), 0.05)
    e1, e2 = expected_degree_given_weight([1.0, 32.0], 2, 2.5, 2.2, rho)
    assert e2 / e1 == pytest.approx(32 ** 0.8)
    assert expected_degree_given_weight(1.0, 2, 1.5, tau, rho) == math.inf


def test_finite_box_deficit_shrinks():
    # with alpha close to d the kernel reaches far and a finite torus loses edges
    rho = rho_for_mean_degree(2, 2.5, 4.0, 10.0)
    small, large = ([2 * g.n_edges / g.n_vertices
                     for g in (sample_graph(SfpParams(2, 2.5, 4.0, rho, v, boundary="torus"), s)
                               for s in range(3))] for v in (2000.0, 20_000.0))
    assert np.mean(small) < np.mean(large) < 10.0


# -- distances and components ------------------------------------------------

def test_distances_against_floyd_warshall():
    g = sample_graph(SfpParams(2, 2.5, 2.2, 0.3, 120.0), 7)
    G = nx.Graph()
    G.add_nodes_from(range(g.n_vertices))
    G.add_edges_from(map(tuple, g.edges()))
    fw = nx.floyd_warshall_numpy(G)
    sample = chemical_distance_sample(g, 100, 1, within_largest=False)
    assert len(sample) == 100
    for s in sample:
        want = fw[s.u, s.v]
        assert (s.hops is None) == (not np.isfinite(want))
        if s.reachable:
            assert s.hops == want
        assert s.euclidean == pytest.approx(np.linalg.norm(g.positions[s.u] - g.positions[s.v]))
    giant = max(nx.connected_components(G), key=len)
    assert largest_component_fraction(g) == pytest.approx(len(giant) / g.n_vertices)
    assert all(s.u in giant and s.reachable for s in chemical_distance_sample(g, 50, 2))


def test_components_edge_cases():
    p = SfpParams(1, 2.0, 2.5, 1.0, 100.0)
    with pytest.raises(ValueError):
        largest_component_fraction(graph_from_edges(p, [], [], []))
    g = graph_from_edges(p, [0.0, 1.0, 2.0, 3.0], np.ones(4), [(0, 1)])
    assert largest_component_fraction(g) == 0.5
    assert chemical_distance_sample(graph_from_edges(p, [0.0], [1.0], []), 5, 0) == []


# -- extinction scaling --------------------------------------------------------

def synthetic(rate, ns, n_rep=201):
    return {n: (np.full(n_rep, math.exp(rate * n)), np.zeros(n_rep, bool)) for n in ns}


def test_scaling_fit_recovers_rate():
    fit = extinction_scaling_fit(synthetic(0.01, [100, 200, 400, 800]))
    assert fit.slope == pytest.approx(0.01) and fit.r2 == pytest.approx(1.0)
    assert not fit.lower_bound_only and fit.n_points == 4


def test_scaling_fit_flat_times():
    fit = extinction_scaling_fit(synthetic(0.0, [100, 200, 400, 800]))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_scaling_fit_alternative_predictor():
    ns = [1e3, 1e4, 1e5, 1e6]
    res = {n: ([math.exp(2e-3 * n / math.log(n) ** 2)] * 5, [False] * 5) for n in ns}
    fit = extinction_scaling_fit(res, predictor="n_over_logA", A=2.0)
    assert fit.slope == pytest.approx(2e-3)
    with pytest.raises(ValueError, match="needs A"):
        extinction_scaling_fit(res, predictor="n_over_logA")


def test_scaling_fit_rejects_too_few_sizes():
    with pytest.raises(ValueError, match="at least 4"):
        extinction_scaling_fit(synthetic(0.01, [100]))


def test_scaling_fit_censoring():
    res = synthetic(0.01, [100, 200, 400, 800])
    res[800] = (np.full(10, 50.0), np.array([True] * 6 + [False] * 4))
    with pytest.raises(ValueError, match="censor"):
        extinction_scaling_fit(res)
    assert extinction_scaling_fit(res, allow_censored=True).lower_bound_only


def test_censored_median():
    assert censored_median([1, 2, 9], [False, False, True]) == (2.0, False)
    assert censored_median([1, 9, 9], [False, True, True]) == (9.0, True)
