import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def csr_of(g: nx.Graph):
    """(indptr, indices) of a networkx graph with nodes 0..n-1."""
    n = g.number_of_nodes()
    adj = [sorted(g[v]) for v in range(n)]
    indptr = np.cumsum([0] + [len(a) for a in adj]).astype(np.int64)
    indices = np.array([w for a in adj for w in a], dtype=np.int64)
    return indptr, indices


def connected_catalogue(max_n=5):
    """All connected graphs on 1..max_n vertices, up to isomorphism."""
    from networkx.generators.atlas import graph_atlas_g
    return [g for g in graph_atlas_g() if 1 <= g.number_of_nodes() <= max_n and nx.is_connected(g)]


def dense_mean_extinction(g: nx.Graph, lam: float) -> float:
    """Mean extinction time from full occupancy by a dense solve over all subsets.

    Written independently of the package: states are frozensets, the
    generator is assembled entry by entry.
    """
    n = g.number_of_nodes()
    states = [frozenset(c) for k in range(1, n + 1) for c in itertools.combinations(range(n), k)]
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for s in states:
        i = index[s]
        for v in s:
            t = s - {v}
            if t:
                Q[i, index[t]] += 1.0
            Q[i, i] -= 1.0
        for v in range(n):
            if v in s:
                continue
            k = sum(1 for u in g[v] if u in s)
            if k:
                Q[i, index[s | {v}]] += lam * k
                Q[i, i] -= lam * k
    T = np.linalg.solve(-Q, np.ones(len(states)))
    return float(T[index[frozenset(range(n))]])


@pytest.fixture
def k2():
    return csr_of(nx.complete_graph(2))


def brute_force_constellation(vertices, edges, J, S, D, Delta) -> bool:
    """Definition-level check written with networkx only.

    Tree test by networkx, distances from all-pairs shortest paths, and the
    star relation by inspecting the interior of every tree path.
    """
    G = nx.Graph()
    G.add_nodes_from(vertices)
    simple = set()
    for u, v in edges:
        if u == v or (min(u, v), max(u, v)) in simple:
            return False
        simple.add((min(u, v), max(u, v)))
    G.add_edges_from(edges)
    if G.number_of_nodes() != len(set(vertices)) or not nx.is_tree(G):
        return False
    if any(G.degree(x) < S / 2 for x in J):
        return False
    dist = dict(nx.all_pairs_shortest_path_length(G))
    R = nx.Graph()
    R.add_nodes_from(J)
    for x, y in itertools.combinations(J, 2):
        interior = nx.shortest_path(G, x, y)[1:-1]
        if not set(interior) & set(J):
            if dist[x][y] > D:
                return False
            R.add_edge(x, y)
    return nx.is_tree(R) and max(dict(R.degree()).values()) <= Delta


def random_instance(rng):
    """Small graph (tree most of the time), a random star set and parameters."""
    n = int(rng.integers(1, 8))
    if n > 1 and rng.random() < 0.75:
        g = nx.random_labeled_tree(n, seed=int(rng.integers(2**31)))
    else:
        g = nx.gnp_random_graph(n, float(rng.uniform(0.2, 0.7)), seed=int(rng.integers(2**31)))
    k = int(rng.integers(1, n + 1))
    J = [int(x) for x in rng.choice(n, size=k, replace=False)]
    S = float(rng.choice([2, 3, 4, 5]))
    D = int(rng.integers(1, 5))
    Delta = int(rng.integers(2, 4))
    return list(range(n)), [tuple(map(int, e)) for e in g.edges()], J, S, D, Delta


_CRITERIA = {}


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the summary."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
