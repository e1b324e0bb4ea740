"""AUROC, score heatmaps, and repeated-run experiments with significance marks."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import ExperimentConfig, load_dataset
from .data import Dataset, ExperimentSplit, MinMaxScaler, Role, assemble_setting, minmax_apply, minmax_fit
from .errors import ConfigError, EvaluationError
from .models import ModelKind, anomaly_scores
from .stats import welch_t_test
from .training import TrainedModel, train

log = logging.getLogger(__name__)

CLASSES = ("known", "unknown")
SIGNIFICANCE = 0.05


def auroc(scores, is_anomaly) -> float:
    """Mann-Whitney AUROC: P(score_anomaly > score_normal) + 0.5 P(tie).

    Sorts once and assigns tied scores their average rank, so the result is
    exact (half-integer arithmetic) and O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_anomaly, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise EvaluationError("scores and labels must be 1-D and of equal length")
    n_pos = int(pos.sum())
    n_neg = len(s) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUROC needs at least one anomaly and one normal point")
    if np.isnan(s).any():
        raise EvaluationError("scores contain NaN")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # boundaries of runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    avg_rank = (starts + ends + 1) / 2.0     # 1-based mean rank within each run
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(avg_rank, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score(model: TrainedModel, x) -> np.ndarray:
    return anomaly_scores(model.kind, model.params, x, model.config.model.distance)


def evaluate_split(model: TrainedModel, test: Dataset) -> tuple[float | None, float | None]:
    """(known-anomaly AUROC, unknown-anomaly AUROC) against the test normals."""
    s = score(model, test.x)
    normal = test.role == Role.NORMAL
    out = []
    for role in (Role.KNOWN, Role.UNKNOWN):
        mask = test.role == role
        if not normal.any() or not mask.any():
            out.append(None)
            continue
        sel = normal | mask
        out.append(auroc(s[sel], mask[sel]))
    return out[0], out[1]


@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    bbox: tuple[float, float, float, float]
    nx: int
    ny: int
    values: np.ndarray        # row-major, shape (ny, nx); x varies fastest

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xmin, xmax, ymin, ymax = self.bbox
        xs = xmin + (np.arange(self.nx) + 0.5) * (xmax - xmin) / self.nx
        ys = ymin + (np.arange(self.ny) + 0.5) * (ymax - ymin) / self.ny
        return xs, ys

    def to_csv(self) -> str:
        xs, ys = self.centers()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "score"])
        for j, yv in enumerate(ys):
            for i, xv in enumerate(xs):
                w.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.values[j, i]))])
        return buf.getvalue()


def default_bbox(dataset: Dataset, margin: float = 0.2) -> tuple[float, float, float, float]:
    lo, hi = dataset.x.min(axis=0), dataset.x.max(axis=0)
    pad = margin * (hi - lo)
    return (float(lo[0] - pad[0]), float(hi[0] + pad[0]), float(lo[1] - pad[1]), float(hi[1] + pad[1]))


def heatmap(model: TrainedModel, bbox, resolution=(200, 200),
            scaler: MinMaxScaler | None = None) -> HeatmapGrid:
    """Scores on a grid of cell centres; ``bbox`` is in raw coordinates, and
    ``scaler`` (if the model was trained on scaled data) is applied before scoring."""
    in_dim = getattr(model.params, "in_dim")
    if in_dim != 2:
        raise ConfigError(f"heatmaps need a 2-D model, this one takes {in_dim} inputs")
    nx, ny = (int(r) for r in resolution)
    if nx < 1 or ny < 1:
        raise ConfigError("resolution must be positive")
    grid = HeatmapGrid(tuple(float(v) for v in bbox), nx, ny, np.zeros((ny, nx)))
    xs, ys = grid.centers()
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if scaler is not None:
        pts = scaler.transform(pts)
    values = score(model, pts).reshape(ny, nx)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite anomaly scores on the heatmap grid")
    return HeatmapGrid(grid.bbox, nx, ny, values)


@dataclass
class Cell:
    runs: list[float] = field(default_factory=list)
    mean: float | None = None
    std: float | None = None
    best: bool = False
    tied_with_best: bool = False


@dataclass
class EvalReport:
    """AUROC per model kind and anomaly class over repeated runs.

    ``std`` is the population standard deviation over runs (0 for one run).
    ``tied_with_best`` marks the best mean in a column and every entry whose
    Welch p-value against it is at least 0.05.
    """

    setting: int
    runs: int
    models: list[str]
    cells: dict[str, dict[str, Cell]]
    failures: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "runs": self.runs,
            "models": self.models,
            "auroc": {k: {c: vars(cell) for c, cell in v.items()} for k, v in self.cells.items()},
            "failures": self.failures,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_table(self) -> str:
        """Aligned text mirroring the paper's layout: rows A/U, one column per model."""
        width = max(12, *(len(m) + 2 for m in self.models))
        lines = [f"Setting {self.setting} ({self.runs} runs)   * = best or not significantly worse"]
        lines.append(" " * 4 + "".join(m.rjust(width) for m in self.models))
        for label, cls in (("A", "known"), ("U", "unknown")):
            row = label.ljust(4)
            for m in self.models:
                cell = self.cells[m][cls]
                if cell.mean is None:
                    txt = "-"
                else:
                    txt = f"{cell.mean:.3f}({round(cell.std * 1000):03d})"
                    if cell.tied_with_best:
                        txt += "*"
                row += txt.rjust(width)
            lines.append(row)
        return "\n".join(lines) + "\n"


def aggregate(models: list[str], per_run: list[dict], setting: int, runs: int,
              failures: list[dict]) -> EvalReport:
    """Fold per-run ``{kind: (known, unknown)}`` dicts into an :class:`EvalReport`."""
    cells = {m: {c: Cell() for c in CLASSES} for m in models}
    for result in per_run:
        for m, pair in result.items():
            for c, v in zip(CLASSES, pair):
                if v is not None:
                    cells[m][c].runs.append(v)
    for m in models:
        for c in CLASSES:
            cell = cells[m][c]
            if cell.runs:
                arr = np.asarray(cell.runs)
                cell.mean = float(np.mean(arr))
                cell.std = float(np.std(arr))
    for c in CLASSES:
        filled = [m for m in models if cells[m][c].mean is not None]
        if not filled:
            continue
        top = max(filled, key=lambda m: cells[m][c].mean)
        cells[top][c].best = True
        for m in filled:
            cell = cells[m][c]
            if m == top:
                cell.tied_with_best = True
            elif len(cell.runs) >= 2 and len(cells[top][c].runs) >= 2:
                cell.tied_with_best = welch_t_test(cells[top][c].runs, cell.runs) >= SIGNIFICANCE
            else:
                cell.tied_with_best = cell.mean == cells[top][c].mean
    return EvalReport(setting, runs, models, cells, failures)


class RunOutcome(NamedTuple):
    run: int
    aurocs: dict
    models: dict            # kind -> TrainedModel
    split: ExperimentSplit
    failures: list
    scaler: MinMaxScaler | None = None


def prepare_split(config: ExperimentConfig, dataset: Dataset,
                  run: int) -> tuple[ExperimentSplit, MinMaxScaler | None]:
    """Split for run ``run``, min-max scaled on its train part when scaling is on."""
    split = assemble_setting(dataset, config.setting, config.setting_params(), config.base_seed + run)
    if not config.data.scaling_enabled:
        return split, None
    scaler = minmax_fit(split.train)
    split = ExperimentSplit(minmax_apply(scaler, split.train), minmax_apply(scaler, split.test),
                            split.setting, split.params, split.train_index, split.test_index)
    return split, scaler


def run_once(config: ExperimentConfig, dataset: Dataset, run: int) -> RunOutcome:
    split, scaler = prepare_split(config, dataset, run)
    aurocs, trained, failures = {}, {}, []
    for kind in config.models:
        tc = config.train_config(kind, seed=config.base_seed + run)
        try:
            model = train(split.train, tc)
            aurocs[kind.value] = evaluate_split(model, split.test)
            trained[kind.value] = model
        except (ArithmeticError, ValueError) as e:
            log.warning("run %d, %s failed: %s", run, kind.value, e)
            failures.append({"run": run, "model": kind.value, "error": str(e)})
    return RunOutcome(run, aurocs, trained, split, failures, scaler)


def _run_job(args):
    return run_once(*args)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None,
                   keep_models: bool = False) -> EvalReport | tuple[EvalReport, list[RunOutcome]]:
    """Train and evaluate every configured model ``config.runs`` times.

    Run r uses seed ``base_seed + r`` for both the split and the training.
    With ``keep_models`` the per-run outcomes (trained models, splits) are
    returned as well.
    """
    if dataset is None:
        dataset = load_dataset(config.data)
    jobs = [(config, dataset, r) for r in range(config.runs)]
    if config.workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(j) for j in jobs]
    failures = [f for o in outcomes for f in o.failures]
    models = [k.value for k in config.models]
    report = aggregate(models, [o.aurocs for o in outcomes], config.setting, config.runs, failures)
    report.extra["config"] = config.to_dict()
    if keep_models:
        return report, outcomes
    return report
