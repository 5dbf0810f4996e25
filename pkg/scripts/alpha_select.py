"""RZF regularizer scan: median equal-power min-rate for each alpha on the grid.

    python scripts/alpha_select.py --sigma-e2 0.075 0.3
"""

import argparse

import numpy as np

from uinject import channel_mimo as mimo


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--sigma-e2", type=float, nargs="+", default=[0.075])
    p.add_argument("--scenarios", type=int, default=500)
    p.add_argument("--realizations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    for s2 in args.sigma_e2:
        cfg = mimo.MimoConfig(sigma_e2=s2)
        best, med = mimo.select_alpha(cfg, np.random.default_rng(args.seed),
                                      n_scenarios=args.scenarios, n_realizations=args.realizations)
        cells = "  ".join(f"{a:g}: {v / 1e6:.3f}" for a, v in med.items())
        print(f"sigma_e2 = {s2:g}  median min-rate (Mbps)  {cells}  -> alpha = {best:g}")


if __name__ == "__main__":
    main()
