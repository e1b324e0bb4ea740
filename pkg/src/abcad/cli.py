"""Command-line entry point.

    abcad gen-toy   write the 2D toy dataset as CSV
    abcad train     train one model, save parameters and the per-epoch log
    abcad score     score a CSV with a saved model
    abcad heatmap   grid of anomaly scores for a 2-D model
    abcad bench     repeated-run benchmark: report JSON, text table, heatmaps, loss curves

Settings come from an optional JSON config; command-line flags override it.
The output directory is taken from, in increasing priority: the config,
the ABCAD_OUTPUT_DIR environment variable, ``--out-dir``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_dataset
from .data import TOY_NOISE_STD, MinMaxScaler, Role, dataset_to_csv, gen_toy, load_csv, parse_csv
from .errors import ConfigError, ParseError, ShapeError
from .evaluation import default_bbox, evaluate_split, heatmap, prepare_split, run_experiment
from .models import ModelConfig, ModelKind, anomaly_scores
from .nn import params_from_json, params_to_json
from .training import TrainConfig, TrainedModel, TrainLog, train

log = logging.getLogger("abcad")

OUTPUT_ENV = "ABCAD_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abcad", description="Autoencoding binary classifier toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-toy", help="write the 2D toy dataset as CSV")
    g.add_argument("--n-normal", type=int, default=10000)
    g.add_argument("--n-known", type=int, default=10000)
    g.add_argument("--n-unknown", type=int, default=10000)
    g.add_argument("--noise-std", type=float, default=TOY_NOISE_STD)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=None, help="CSV path (default: <out-dir>/toy.csv)")
    g.add_argument("--out-dir", type=Path, default=None)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out-dir", type=Path, default=None)
        sp.add_argument("--data", type=Path, default=None, help="labeled CSV (sets data.source=csv)")
        sp.add_argument("--setting", type=int, choices=(1, 2, 3))
        sp.add_argument("--contaminants", type=int)
        sp.add_argument("--known-cap", type=int)
        sp.add_argument("--max-epochs", type=int)
        sp.add_argument("--seed", type=int, help="base seed for splits and training")

    t = sub.add_parser("train", help="train one model")
    common(t)
    t.add_argument("--kind", choices=[k.value for k in ModelKind])

    b = sub.add_parser("bench", help="repeated-run benchmark")
    common(b)
    b.add_argument("--runs", type=int)
    b.add_argument("--models", help="comma-separated model kinds")
    b.add_argument("--workers", type=int)
    b.add_argument("--known-sweep", type=_ints, help="comma-separated known-anomaly caps (Setting 3)")
    b.add_argument("--heatmap-resolution", type=_ints, default=[200, 200])

    s = sub.add_parser("score", help="score a CSV with a saved model")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    h = sub.add_parser("heatmap", help="anomaly-score grid for a 2-D model")
    h.add_argument("--model", type=Path, required=True)
    h.add_argument("--out", type=Path, required=True)
    h.add_argument("--bbox", type=_floats, help="xmin,xmax,ymin,ymax (default: toy extent + 20%%)")
    h.add_argument("--data", type=Path, help="CSV whose extent sets the default bbox")
    h.add_argument("--resolution", type=_ints, default=[200, 200])
    return p


def load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        cfg = ExperimentConfig.from_json(text)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "data", None):
        cfg = cfg.replace("data", source="csv", path=str(args.data))
    exp = {}
    for flag, key in [("setting", "setting"), ("contaminants", "contaminants"),
                      ("known_cap", "known_cap"), ("seed", "base_seed"), ("runs", "runs"),
                      ("workers", "workers"), ("known_sweep", "known_sweep")]:
        v = getattr(args, flag, None)
        if v is not None:
            exp[key] = v
    if exp:
        cfg = cfg.replace("experiment", **exp)
    if getattr(args, "max_epochs", None) is not None:
        cfg = cfg.replace("train", max_epochs=args.max_epochs)
    if getattr(args, "kind", None):
        cfg = cfg.replace("model", kind=args.kind)
    if getattr(args, "models", None):
        cfg = cfg.replace("model", kinds=[m.strip() for m in args.models.split(",") if m.strip()])
    cfg = cfg.replace("output", directory=str(output_dir(args, cfg.output.directory)))
    return cfg


def output_dir(args, configured: str = "out") -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    return Path(os.environ.get(OUTPUT_ENV) or configured)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def save_model(path: Path, model: TrainedModel, scaler: MinMaxScaler | None) -> None:
    mc = model.config.model
    meta = {
        "kind": model.kind.value,
        "model": {"hidden": list(mc.hidden), "latent": mc.latent, "distance": mc.distance,
                  "noise_std": mc.noise_std, "clamp": mc.clamp},
        "scaler": None if scaler is None else {"min": scaler.lo.tolist(), "max": scaler.hi.tolist()},
    }
    _write(path, params_to_json(model.params, **meta))


def load_model(path: Path) -> tuple[TrainedModel, MinMaxScaler | None]:
    try:
        params, meta = params_from_json(path.read_text(encoding="utf-8"))
        m = meta["model"]
        mc = ModelConfig(meta["kind"], m["hidden"], m["latent"], m["distance"], m["noise_std"],
                         m["clamp"])
        sc = meta.get("scaler")
        scaler = None if sc is None else MinMaxScaler(np.asarray(sc["min"]), np.asarray(sc["max"]))
    except OSError as e:
        raise ConfigError(f"cannot read model: {e}") from None
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: malformed model file ({e})") from None
    return TrainedModel(mc.kind, params, TrainConfig(model=mc), TrainLog()), scaler


def cmd_gen_toy(args) -> int:
    ds = gen_toy(args.n_normal, args.n_known, args.n_unknown, args.noise_std, args.seed)
    out = args.out or output_dir(args) / "toy.csv"
    _write(Path(out), dataset_to_csv(ds))
    print(f"wrote {out}: {ds.count(Role.NORMAL)} normal, {ds.count(Role.KNOWN)} known_anomaly, "
          f"{ds.count(Role.UNKNOWN)} unknown_anomaly")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.output.directory)
    dataset = load_dataset(cfg.data)
    split, scaler = prepare_split(cfg, dataset, 0)
    model = train(split.train, cfg.train_config(cfg.model.kind, seed=cfg.base_seed))
    known, unknown = evaluate_split(model, split.test)
    _write(out / "config.json", cfg.to_json())
    save_model(out / "model.json", model, scaler)
    _write(out / "trainlog.csv", model.log.to_csv())
    _write(out / "split.json", split.manifest_json())
    fmt = lambda v: "n/a" if v is None else f"{v:.3f}"
    print(f"{model.kind.value}: {len(model.log.records)} epochs (best {model.log.best_epoch}); "
          f"test AUROC known {fmt(known)}, unknown {fmt(unknown)}")
    return EXIT_OK


def _read_points(path: Path, dim: int) -> np.ndarray:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read input: {e}") from None
    header = next(csv.reader(io.StringIO(text)), None)
    if header is not None and header and header[-1] != "role":
        # feature-only CSV: append a dummy role column so the dataset parser applies
        lines = text.splitlines()
        text = "\n".join([lines[0] + ",role"] + [ln + ",normal" for ln in lines[1:] if ln.strip()])
    ds = parse_csv(io.StringIO(text), provenance=str(path))
    if ds.dim != dim:
        raise ShapeError(f"model expects {dim} features, {path} has {ds.dim}")
    return ds.x


def cmd_score(args) -> int:
    model, scaler = load_model(args.model)
    x = _read_points(args.input, model.params.in_dim)
    if scaler is not None and len(x):
        x = scaler.transform(x)
    scores = (anomaly_scores(model.kind, model.params, x, model.config.model.distance)
              if len(x) else np.zeros(0))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    flagged = model.kind.calibrated
    w.writerow(["index", "score"] + (["flag"] if flagged else []))
    for i, s in enumerate(np.atleast_1d(scores)):
        w.writerow([i, repr(float(s))] + ([str(bool(s > 0.5)).lower()] if flagged else []))
    _write(args.out, buf.getvalue())
    return EXIT_OK


def _toy_extent():
    return default_bbox(gen_toy())


def cmd_heatmap(args) -> int:
    model, scaler = load_model(args.model)
    if args.bbox:
        if len(args.bbox) != 4:
            raise ConfigError("--bbox needs xmin,xmax,ymin,ymax")
        bbox = tuple(args.bbox)
    elif args.data:
        bbox = default_bbox(load_csv(args.data))
    else:
        bbox = _toy_extent()
    grid = heatmap(model, bbox, args.resolution, scaler)
    _write(args.out, grid.to_csv())
    return EXIT_OK


def _bench_once(cfg: ExperimentConfig, dataset, out: Path, resolution) -> int:
    report, outcomes = run_experiment(cfg, dataset, keep_models=True)
    _write(out / "report.json", report.to_json())
    _write(out / "table.txt", report.to_table())
    for o in outcomes:
        for kind, model in o.models.items():
            _write(out / "curves" / f"run{o.run}_{kind}.csv", model.log.to_csv())
    if dataset.dim == 2 and outcomes:
        bbox = default_bbox(dataset)
        first = outcomes[0]
        for kind, model in first.models.items():
            grid = heatmap(model, bbox, resolution, first.scaler)
            _write(out / "heatmaps" / f"{kind}.csv", grid.to_csv())
    print(report.to_table(), end="")
    attempted = cfg.runs * len(cfg.models)
    return EXIT_RUNTIME if len(report.failures) == attempted else EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.output.directory)
    dataset = load_dataset(cfg.data)
    _write(out / "config.json", cfg.to_json())
    sweep = cfg.experiment.known_sweep
    if not sweep:
        return _bench_once(cfg, dataset, out, args.heatmap_resolution)
    codes = []
    for cap in sweep:
        sub_cfg = cfg.replace("experiment", setting=3, known_cap=cap, known_sweep=None)
        print(f"-- known anomalies: {cap}")
        codes.append(_bench_once(sub_cfg, dataset, out / f"known_{cap}", args.heatmap_resolution))
    return EXIT_RUNTIME if all(c == EXIT_RUNTIME for c in codes) else EXIT_OK


COMMANDS = {"gen-toy": cmd_gen_toy, "train": cmd_train, "score": cmd_score,
            "heatmap": cmd_heatmap, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"abcad: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, ShapeError) as e:
        print(f"abcad: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, OSError) as e:
        print(f"abcad: runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
