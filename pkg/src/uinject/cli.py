"""Command line: ``uinject <verb> [--config F] [--seed S] [--out D] [--paper-scale] [--methods a,b]``.

Verbs:
  train         train the learned methods, write checkpoints and training logs
  evaluate      full experiment; checkpoints already in --out are reused
  compare       ratios and ordering flags from the report in --out
  cdf           (re)write cdf_<method>.csv from the report in --out
  alpha-select  pick the RZF regularizer from the configured grid
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness


def _parser():
    p = argparse.ArgumentParser(prog="uinject", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("verb", choices=["train", "evaluate", "compare", "cdf", "alpha-select"])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--paper-scale", action="store_true",
                   help="training and evaluation sizes of the original experiments")
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(harness.METHODS))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args):
    methods = args.methods.split(",") if args.methods else None
    return harness.load_config(args.config, paper_scale=args.paper_scale,
                               **{"experiment.seed": args.seed, "experiment.out": args.out,
                                  "experiment.methods": methods})


def _report_path(args):
    out = Path(args.out) if args.out else Path(_config(args).out)
    path = out / "report.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `uinject evaluate` first")
    return out, harness.EvalReport.load(path)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "train":
            cfg = _config(args)
            models = harness.train_models(cfg)
            print(f"trained {', '.join(models) or 'nothing'} -> {cfg.out}")
        elif args.verb == "evaluate":
            cfg = _config(args)
            report = harness.run_experiment(cfg, reuse_checkpoints=True)
            sys.stdout.write(harness.summary_csv(report))
        elif args.verb == "compare":
            out, report = _report_path(args)
            c = harness.compare_methods(report)
            text = harness.comparison_csv(c)
            (out / "compare.csv").write_text(text)
            for name, nom, rob in c.table:
                print(f"{name:>8s}  nominal {nom:9.4f} Mbps  robust {rob:8.4f} Mbps")
            for flag, ok in c.flags.items():
                print(f"{flag}: {'holds' if ok else 'violated'}")
        elif args.verb == "cdf":
            out, report = _report_path(args)
            methods = args.methods.split(",") if args.methods else list(report.methods)
            for m in methods:
                (out / f"cdf_{m}.csv").write_text(harness.emit_cdf(report, m))
                print(out / f"cdf_{m}.csv")
        else:
            cfg = _config(args)
            best, medians = harness.alpha_selection(cfg)
            rows = [[harness._fmt(a), harness._fmt(v / 1e6)] for a, v in medians.items()]
            text = harness._csv_text(["alpha", "median_min_rate_mbps"], rows)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "alpha_select.csv").write_text(text)
            sys.stdout.write(text)
            print(f"selected alpha = {best:g}")
    except (harness.ConfigError, FileNotFoundError, KeyError, RuntimeError, ValueError) as e:
        print(f"uinject: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
