"""Success frequency of the layered constellation search for 1 < gamma < 2."""
import argparse
import math

from sfpcontact.constellation import Constellation, LayeredSpec, extract_constellation_gamma_in_1_2
from sfpcontact.graph import SfpParams, sample_graph

LN2 = math.log(2)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--volumes", type=float, nargs="+", default=[1000, 2000, 4000])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--rho", type=float, default=4000.0)
    ap.add_argument("--cell-scale", type=float, default=16.0)
    args = ap.parse_args()

    # d = 1, alpha = 2, tau = 1.75 gives gamma = 1.5
    lspec = LayeredSpec(a=0.5 / LN2, L=(0.75 * LN2 + LN2) / 2, S=2.0, cell_scale=args.cell_scale)
    for n in args.volumes:
        params = SfpParams(d=1, alpha=2.0, tau=1.75, rho=args.rho, volume=n)
        stages = {}
        wins = 0
        for s in range(args.seeds):
            r = extract_constellation_gamma_in_1_2(sample_graph(params, 9000 + s), lspec)
            if isinstance(r, Constellation):
                wins += 1
            else:
                stages[r.stage] = stages.get(r.stage, 0) + 1
        print(f"n={n:g}  success {wins}/{args.seeds}  failures by stage {stages}")


if __name__ == "__main__":
    main()
