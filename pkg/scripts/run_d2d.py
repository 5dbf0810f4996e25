"""D2D power control under settings A, B and C.

    python scripts/run_d2d.py --settings A --seed 0 --out runs/d2d
"""

import argparse
from pathlib import Path

from uinject import harness


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--settings", default="A,B,C")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/d2d")
    p.add_argument("--config", help="extra key = value overrides")
    p.add_argument("--paper-scale", action="store_true")
    args = p.parse_args()

    rows = []
    for setting in args.settings.upper().split(","):
        out = Path(args.out) / f"setting_{setting}"
        cfg = harness.load_config(args.config, paper_scale=args.paper_scale,
                                  **{"experiment.environment": "d2d", "experiment.setting": setting,
                                     "experiment.seed": args.seed, "experiment.out": str(out)})
        report = harness.run_experiment(cfg)
        for name, r in report.methods.items():
            rows.append((setting, name, r.mean_nominal / 1e6, r.mean_robust / 1e6))
        c = harness.compare_methods(report)
        print(f"setting {setting}: inject/maxmin robust ratio {c.robust_ratio[('inject', 'maxmin')]:.3f}, "
              f"orderings {c.flags}")
    print(f"\n{'setting':>7s} {'method':>8s} {'nominal':>9s} {'robust':>8s}  (Mbps)")
    for s, name, nom, rob in rows:
        print(f"{s:>7s} {name:>8s} {nom:9.3f} {rob:8.3f}")


if __name__ == "__main__":
    main()
