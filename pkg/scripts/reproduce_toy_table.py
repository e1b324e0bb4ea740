"""Toy benchmark for Settings 1 and 2: six models, repeated runs, table to stdout.

    python scripts/reproduce_toy_table.py --runs 5 --out results/toy
"""
import argparse
import logging
from pathlib import Path

from abcad.config import ExperimentConfig
from abcad.evaluation import run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--settings", default="1,2", help="comma-separated subset of 1,2")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="directory for report JSON and tables")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    for setting in (int(s) for s in args.settings.split(",")):
        cfg = ExperimentConfig.from_dict({"experiment": {"setting": setting, "runs": args.runs,
                                                         "workers": args.workers}})
        report = run_experiment(cfg)
        print(report.to_table())
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"setting{setting}.json").write_text(report.to_json())
            (args.out / f"setting{setting}.txt").write_text(report.to_table())


if __name__ == "__main__":
    main()
