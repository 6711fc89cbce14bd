"""``cod moons|fisher|bound|ablation --config FILE [--seed S ...] [--out DIR] [--k K]``"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

from .harness import EXPERIMENTS, load_config, run


def build_parser():
    p = argparse.ArgumentParser(prog="cod", description="Counterfactual-infused distillation experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="seed (repeatable)")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--k", type=int, help="few-shot budget")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"experiment": args.experiment, "seeds": args.seeds,
                                        "output_dir": args.output_dir, "k": args.k})
        summary = run(cfg)
    except Exception as exc:  # noqa: BLE001 - reported as JSON
        err = {"error": type(exc).__name__, "message": str(exc)}
        if args.verbose:
            err["traceback"] = traceback.format_exc()
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps({"experiment": summary.experiment, "output_dir": cfg.output_dir,
                      "aggregate": summary.aggregate}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
