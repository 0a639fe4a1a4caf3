"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Runtime limits are measured around the work the criterion describes and
asserted together with the statistical condition.
"""

import math
import time
from decimal import Decimal, getcontext

import numpy as np
import pytest

from conftest import brute_force_constellation, connected_catalogue, csr_of, random_instance
from sfpcontact._rng import replica_seeds
from sfpcontact.analysis import (calibrate_rho, degree_tail_fit, degree_weight_scaling,
                                 extinction_scaling_fit)
from sfpcontact.constellation import (Constellation, ConstellationParams, DegenerateRegimeError,
                                      LayeredSpec, PartitionSpec, build_partition, depth_for,
                                      extract_constellation_gamma_in_1_2, is_constellation)
from sfpcontact.contact import (build_graphical, coupled_run, exact_mean_extinction,
                                extinction_time_replicas, survival_probability_estimate)
from sfpcontact.graph import SfpParams, sample_edges_reference, sample_graph, sample_weights

pytestmark = pytest.mark.slow
LN2 = math.log(2)


def test_criterion_01_edge_law(report):
    p = SfpParams(d=2, alpha=2.0, tau=2.2, rho=1.0, volume=100)
    pos = np.array([[1.0, 1.0], [2.0, 1.0]])
    w = np.ones(2)
    sample_edges_reference(p, pos, w, 0)  # compile outside the timed region
    R = 100_000
    t0 = time.perf_counter()
    hits = sum(sample_edges_reference(p, pos, w, s).shape[0] for s in range(1, R + 1))
    elapsed = time.perf_counter() - t0
    q = 1 - math.exp(-1)
    sigma = math.sqrt(q * (1 - q) / R)
    z = (hits / R - q) / sigma
    ok = abs(z) <= 3 and elapsed < 5
    report(1, ok, f"frequency {hits / R:.5f} vs {q:.6f}, z = {z:+.2f}, {elapsed:.2f} s")
    assert ok


def test_criterion_02_weight_tail(report):
    N = 1_000_000
    t0 = time.perf_counter()
    w = sample_weights(SfpParams(d=1, alpha=2.0, tau=2.2, rho=1.0, volume=1.0), N, 2024)
    zs = []
    for t in (2, 4, 8, 16):
        p = t ** -1.2
        zs.append(((w >= t).mean() - p) / math.sqrt(p * (1 - p) / N))
    elapsed = time.perf_counter() - t0
    ok = max(abs(z) for z in zs) <= 4 and elapsed < 5
    report(2, ok, "z at t=2,4,8,16: " + ", ".join(f"{z:+.2f}" for z in zs) + f"; {elapsed:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def degree_family():
    """Ten graphs of the gamma = 1.5 family at n = 1e5 with mean degree close to 10."""
    base = SfpParams(d=2, alpha=2.5, tau=2.2, rho=0.05, volume=1e5)
    t0 = time.perf_counter()
    rho = calibrate_rho(base, 10.0, seed=9000)
    graphs = [sample_graph(base.replace(rho=rho), seed) for seed in range(10)]
    return rho, graphs, time.perf_counter() - t0


def test_criterion_03_degree_power_law(report, degree_family):
    rho, graphs, build = degree_family
    t0 = time.perf_counter()
    fits = [degree_tail_fit(g).exponent for g in graphs]
    elapsed = build + time.perf_counter() - t0
    means = [2 * g.n_edges / g.n_vertices for g in graphs]
    inside = sum(1.2 <= f <= 1.8 for f in fits)
    ok = inside >= 9 and elapsed < 300
    report(3, ok, f"rho = {rho:.4f}, mean degree {np.mean(means):.2f}; Hill in [1.2, 1.8] for "
                  f"{inside}/10 (range {min(fits):.3f}..{max(fits):.3f}); {elapsed:.0f} s")
    assert ok


def test_criterion_04_degree_weight_scaling(report, degree_family):
    _, graphs, _ = degree_family
    slopes = [degree_weight_scaling(g).slope for g in graphs]
    inside = sum(abs(s - 0.8) <= 0.1 for s in slopes)
    ok = inside >= 9
    report(4, ok, f"slope within 0.8 +- 0.1 for {inside}/10 (range {min(slopes):.3f}..{max(slopes):.3f})")
    assert ok


def test_criterion_05_contact_exactness(report):
    graphs = connected_catalogue(5)
    assert len(graphs) == 31
    R = 200_000
    extinction_time_replicas(csr_of(graphs[1]), 1.0, 1e9, 10, 0)  # compile
    t0 = time.perf_counter()
    worst, anchor, failures = 0.0, None, []
    for gi, g in enumerate(graphs):
        csr = csr_of(g)
        for lam in (0.3, 1.0, 3.0):
            exact = exact_mean_extinction(csr, lam)
            res = extinction_time_replicas(csr, lam, math.inf, R, 50_000 + gi)
            taus = np.array([r.tau for r in res])
            assert not any(r.censored for r in res)
            se = taus.std(ddof=1) / math.sqrt(R)
            z = (taus.mean() - exact) / se
            worst = max(worst, abs(z))
            if abs(z) > 4:
                failures.append((gi, lam, round(z, 2)))
            if g.number_of_nodes() == 2 and lam == 1.0:
                anchor = (exact, taus.mean(), z)
    elapsed = time.perf_counter() - t0
    ok = not failures and anchor is not None and abs(anchor[0] - 2.0) < 1e-12 and elapsed < 600
    report(5, ok, f"93 cases, max |z| = {worst:.2f}, failures {failures}; K2 at lambda 1: exact "
                  f"{anchor[0]:.6f}, simulated {anchor[1]:.4f}; {elapsed:.0f} s")
    assert ok


def test_criterion_06_monotone_coupling(report):
    g = sample_graph(SfpParams(d=2, alpha=2.5, tau=2.2, rho=0.005, volume=1000), 6)
    build_graphical(g, 1.0, 1.0, 0)
    t0 = time.perf_counter()
    contain = order = strict = 0
    for s in replica_seeds(606, 1000):
        gc = build_graphical(g, 1.0, 25.0, s)
        (lo, hi), cert = coupled_run(gc, [0.5, 1.0], record=False)
        contain += sum(cert.violations)
        order += cert.tau_order_violations
        strict += lo.tau < hi.tau
    elapsed = time.perf_counter() - t0
    ok = contain == 0 and order == 0 and elapsed < 60
    report(6, ok, f"{g.n_vertices} vertices, 1000 replicas: {contain} containment and {order} "
                  f"ordering violations ({strict} with tau(0.5) < tau(1.0)); {elapsed:.1f} s")
    assert ok


def test_criterion_07_checker_agreement(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    agree = positives = 0
    for _ in range(500):
        V, E, J, S, D, Delta = random_instance(rng)
        got = bool(is_constellation(V, E, J, ConstellationParams(S, D, Delta)))
        want = brute_force_constellation(V, E, J, S, D, Delta)
        agree += got == want
        positives += want
    elapsed = time.perf_counter() - t0
    ok = agree == 500 and elapsed < 10
    report(7, ok, f"{agree}/500 agree ({positives} constellations); {elapsed:.2f} s")
    assert ok


def _decimal_check(volume, d, A, theta, s):
    """Floor formulas and the upper bound in decimal arithmetic with digits to spare."""
    n = Decimal(volume)
    getcontext().prec = 80 + n.adjusted()
    ln = n.ln()
    lnln = ln.ln()
    A_, th = Decimal(A), Decimal(theta)
    q_c = int((n.ln() / d).exp() / (lnln * A_ / d).exp())
    qs = [int((lnln * (th ** (k - 1) - th ** k) * A_ / d).exp()) for k in range(1, s + 1)]
    m_c = q_c ** d
    m_ks = [q ** d for q in qs]
    m_f = m_c * math.prod(m_ks)
    nu_p = th ** s * A_
    bound_ok = Decimal(m_f) * (lnln * nu_p).exp() <= n
    return m_c, m_ks, m_f, bound_ok


def test_criterion_08_partition_arithmetic(report):
    families = [(2, 3.0, 3.0, (16.0, 20.0, 24.0)), (1, 1.5, 3.0, (16.0, 20.0)),
                (3, 4.0, 2.5, (16.0, 24.0))]
    volumes = (1e40, 1e60, 1e100, 1e150, 1e250)
    checked, skipped, mismatches = 0, 0, []
    for d, alpha, tau, As in families:
        for A in As:
            for volume in volumes:
                params = SfpParams(d=d, alpha=alpha, tau=tau, rho=1.0, volume=volume)
                lo = PartitionSpec(A=A, theta=0.99).theta_interval(params)[0]
                for frac in (0.25, 0.75):
                    theta = lo + frac * (1 - lo)
                    try:
                        part = build_partition(params, PartitionSpec(A=A, theta=theta))
                    except DegenerateRegimeError:
                        skipped += 1
                        continue
                    s = depth_for(params.gamma, theta)
                    m_c, m_ks, m_f, bound_ok = _decimal_check(volume, d, A, theta, s)
                    good = (part.s == s and part.m_c == m_c and part.m_levels == m_ks
                            and part.m_f == m_f and bound_ok
                            and A / (2 * params.gamma) <= part.nu_p * (1 + 1e-12)
                            and part.nu_p <= A / (2 * params.gamma * theta) * (1 + 1e-12))
                    checked += 1
                    if not good:
                        mismatches.append((d, A, volume, round(theta, 4)))
    ok = checked >= 30 and not mismatches
    report(8, ok, f"{checked} feasible lattice points exact ({skipped} infeasible skipped); "
                  f"mismatches {mismatches}")
    assert ok


def test_criterion_09_layered_construction(report):
    # Cells 16 times the unit scale keep top boxes occupied. Relative to 8-unit
    # cells with rho = 1000, doubling the scale and multiplying rho by 2^alpha
    # leaves the edge law between stars in neighbouring cells unchanged.
    lspec = LayeredSpec(a=0.5 / LN2, L=(0.75 * LN2 + LN2) / 2, S=2.0, cell_scale=16.0)
    sizes = (1000.0, 2000.0, 4000.0)
    freqs, invalid = [], 0
    for n in sizes:
        params = SfpParams(d=1, alpha=2.0, tau=1.75, rho=4000.0, volume=n)
        wins = 0
        for seed in range(50):
            r = extract_constellation_gamma_in_1_2(sample_graph(params, 9_000 + seed), lspec)
            if isinstance(r, Constellation):
                wins += 1
                p = r.params
                if not (p.D == 1 and p.Delta <= 2 ** 1 + 2 and is_constellation(r.vertices, r.edges, r.J, p)):
                    invalid += 1
        freqs.append(wins / 50)
    nondecreasing = all(a <= b for a, b in zip(freqs, freqs[1:]))
    ok = invalid == 0 and nondecreasing and sum(freqs) > 0
    report(9, ok, f"success frequency at n = 1000, 2000, 4000: {freqs}; invalid outputs {invalid}")
    assert ok


def test_criterion_10_extinction_growth(report):
    # Annealed replicas: each replica draws its own graph, so the median is over
    # graph and dynamics together. A smaller box is a sub-box of a larger one,
    # which keeps the law of tau monotone in n.
    ns = (250, 500, 1000, 2000)
    lam, t_max = 2.0, 1e6
    t0 = time.perf_counter()
    results = {}
    for n in ns:
        params = SfpParams(d=2, alpha=2.5, tau=2.2, rho=1e-5, volume=n)
        taus, cens = [], []
        for k in range(200):
            g = sample_graph(params, 1000 * n + k)
            r = extinction_time_replicas(g, lam, t_max, 1, k)[0]
            taus.append(r.tau)
            cens.append(r.censored)
        results[n] = (taus, cens)
    fit = extinction_scaling_fit(results, allow_censored=True)
    medians = [p[2] for p in fit.points]
    increasing = all(a < b for a, b in zip(medians, medians[1:]))
    g = sample_graph(SfpParams(d=2, alpha=2.5, tau=2.2, rho=0.005, volume=1000), 10)
    hub = int(np.argmax(g.degrees()))
    lams = [0.25, 0.5, 1.0, 2.0, 4.0]
    est = survival_probability_estimate(g, lams, hub, 20.0, 300, 10)
    surv = [e.estimate for e in est]
    surv_ok = all(a <= b for a, b in zip(surv, surv[1:])) and est[0].coupling_violations == 0
    elapsed = time.perf_counter() - t0
    ok = increasing and fit.slope > 0 and fit.r2 > 0.8 and surv_ok and elapsed < 1800
    cens_frac = [round(p[3], 3) for p in fit.points]
    report(10, ok, f"medians {[round(m, 3) for m in medians]}, censored {cens_frac}, slope "
                   f"{fit.slope:.3g}, R^2 {fit.r2:.3f}, lower bound only {fit.lower_bound_only}; "
                   f"survival {surv} with {est[0].coupling_violations} coupling violations; "
                   f"{elapsed:.0f} s")
    assert ok
