"""Multiuser MIMO downlink: robust vs nominal min-rate for all four methods.

    python scripts/run_mimo.py --seed 0 --out runs/mimo
    python scripts/run_mimo.py --paper-scale    # hours on one core
"""

import argparse

from uinject import harness


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/mimo")
    p.add_argument("--config", help="extra key = value overrides")
    p.add_argument("--paper-scale", action="store_true")
    args = p.parse_args()

    cfg = harness.load_config(args.config, paper_scale=args.paper_scale,
                              **{"experiment.environment": "mimo", "experiment.seed": args.seed,
                                 "experiment.out": args.out})
    report = harness.run_experiment(cfg)
    c = harness.compare_methods(report)
    print(f"{'method':>8s} {'nominal':>10s} {'robust':>8s}   (Mbps, gamma = {cfg.gamma:g})")
    for name, nom, rob in c.table:
        print(f"{name:>8s} {nom:10.3f} {rob:8.3f}")
    print(f"inject / nominal-trained robust ratio: {c.robust_ratio[('inject', 'nominal')]:.3f}")
    print(f"orderings: {c.flags}")
    print(f"CDF data: {cfg.out}/cdf_<method>.csv")


if __name__ == "__main__":
    main()
