"""Known-anomaly AUROC as the number of labeled anomalies in training shrinks.

Prints one line per cap and model, then a CSV-ready summary.

    python scripts/setting3_sweep.py --caps 10,100,1000,10000 --runs 3
"""
import argparse
import csv
import sys

from abcad.config import ExperimentConfig
from abcad.evaluation import run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--caps", default="10,100,1000,10000")
    p.add_argument("--models", default="ABC-AE,ABC-DAE,DNN,AE")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--workers", type=int, default=None)
    args = p.parse_args()

    kinds = [k.strip() for k in args.models.split(",")]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["known_cap", "model", "known_mean", "known_std", "unknown_mean", "unknown_std"])
    for cap in (int(c) for c in args.caps.split(",")):
        cfg = ExperimentConfig.from_dict({
            "model": {"kinds": kinds},
            "experiment": {"setting": 3, "known_cap": cap, "runs": args.runs, "workers": args.workers}})
        report = run_experiment(cfg)
        for k in kinds:
            kn, un = report.cells[k]["known"], report.cells[k]["unknown"]
            w.writerow([cap, k, f"{kn.mean:.4f}", f"{kn.std:.4f}", f"{un.mean:.4f}", f"{un.std:.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
