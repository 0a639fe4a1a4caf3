"""Degree tail and degree-weight scaling of one sampled graph."""
import argparse

from sfpcontact.analysis import calibrate_rho, degree_weight_scaling, hill_sensitivity
from sfpcontact.graph import SfpParams, sample_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--alpha", type=float, default=2.5)
    ap.add_argument("--tau", type=float, default=2.2)
    ap.add_argument("--volume", type=float, default=1e5)
    ap.add_argument("--mean-degree", type=float, default=10.0,
                    help="calibrate rho to this empirical mean degree")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    base = SfpParams(args.d, args.alpha, args.tau, 1.0, args.volume)
    rho = calibrate_rho(base, args.mean_degree, args.seed)
    g = sample_graph(SfpParams(args.d, args.alpha, args.tau, rho, args.volume), args.seed)
    print(f"rho {rho:.4g}  vertices {g.n_vertices}  mean degree {2 * g.n_edges / g.n_vertices:.3f}")
    print(f"expected degree tail exponent {args.tau - 1:.3f}")
    for f in hill_sensitivity(g):
        print(f"  hill, top {f.tail_fraction:.3f}: {f.exponent:.3f} "
              f"[{f.ci_low:.3f}, {f.ci_high:.3f}]")
    s = degree_weight_scaling(g)
    print(f"degree-weight slope {s.slope:.3f} (expected {min(1.0, args.d / args.alpha):.3f})")


if __name__ == "__main__":
    main()
