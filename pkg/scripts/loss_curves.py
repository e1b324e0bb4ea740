"""Per-epoch reconstruction error of normals and anomalies for LRC and ABC.

Trains both on the toy Setting 1 split and writes one CSV per model with the
columns of the training log. LRC drives the anomaly error up without bound and
loses the normals on the way; ABC keeps the normal error low.

    python scripts/loss_curves.py --out results/curves
"""
import argparse
from pathlib import Path

from abcad.config import ExperimentConfig, load_dataset
from abcad.evaluation import prepare_split
from abcad.training import train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("curves"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", default="LRC,ABC-AE")
    args = p.parse_args()

    cfg = ExperimentConfig.from_dict({"experiment": {"setting": 1, "base_seed": args.seed}})
    split, _ = prepare_split(cfg, load_dataset(cfg.data), 0)
    args.out.mkdir(parents=True, exist_ok=True)
    for kind in args.models.split(","):
        model = train(split.train, cfg.train_config(kind, seed=args.seed))
        recon = model.log.column("normal_recon")
        (args.out / f"{kind}.csv").write_text(model.log.to_csv())
        print(f"{kind:7s} epochs {len(recon):3d}  normal recon: first {recon[0]:.4f} "
              f"min {min(recon):.4f} final {recon[-1]:.4f}")


if __name__ == "__main__":
    main()
