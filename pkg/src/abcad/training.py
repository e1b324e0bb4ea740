"""Minibatch Adam training with a validation split and early stopping."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .errors import ConfigError, NumericalError
from .models import (ModelConfig, ModelKind, build_params, model_loss_and_grads,
                     per_point_loss, reconstruction_error)
from .nn import AdamState, AutoencoderParams, Params, adam_step, as_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 100
    max_epochs: int = 300
    validation_fraction: float = 0.2
    patience: int = 10
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_loss: float
    normal_recon: float | None
    anomaly_recon: float | None


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EpochRecord._fields)
        for r in self.records:
            w.writerow(["" if v is None else repr(v) for v in r])
        return buf.getvalue()


@dataclass
class TrainedModel:
    kind: ModelKind
    params: Params
    config: TrainConfig
    log: TrainLog


def split_validation(dataset: Dataset, fraction: float, seed=0) -> tuple[Dataset, Dataset]:
    """Random split stratified by label; falls back to unstratified if a class has < 2 points."""
    if len(dataset) == 0:
        raise ConfigError("cannot split an empty dataset")
    if not 0 < fraction < 1:
        raise ConfigError("fraction must be in (0, 1)")
    rng = as_rng(seed)
    classes = [np.flatnonzero(dataset.y == c) for c in (1, 0)]
    classes = [c for c in classes if len(c)]
    if any(len(c) < 2 for c in classes):
        log.warning("a label class has fewer than 2 points; using an unstratified split")
        classes = [np.arange(len(dataset))]
    val, train = [], []
    for idx in classes:
        idx = rng.permutation(idx)
        k = int(round(fraction * len(idx)))
        val.append(idx[:k])
        train.append(idx[k:])
    tr = np.sort(np.concatenate(train))
    va = np.sort(np.concatenate(val))
    return dataset.subset(tr), dataset.subset(va)


def evaluate_epoch_metrics(params: AutoencoderParams, kind: ModelKind, part: Dataset,
                           distance: str = "squared-l2") -> tuple[float | None, float | None]:
    """Mean clean reconstruction error over y=1 and over y=0 points (None when absent)."""
    if not ModelKind(kind).reconstruction_based:
        raise ConfigError("epoch reconstruction metrics need a reconstruction-based model")
    if len(part) == 0:
        return None, None
    err = reconstruction_error(params, part.x, distance)
    out = []
    for label in (1, 0):
        mask = part.y == label
        out.append(float(np.mean(err[mask])) if mask.any() else None)
    return out[0], out[1]


def _mean_loss(kind, params, part: Dataset, config: ModelConfig) -> float:
    # validation uses clean inputs for every kind, including the denoising ones
    return float(np.mean(per_point_loss(kind, params, part.x, part.y, config)))


def train(dataset: Dataset, config: TrainConfig) -> TrainedModel:
    """Fit one model following the minibatch Adam protocol.

    AE and DAE see only points labelled normal. Every epoch reshuffles the
    training part and visits it in batches of ``batch_size`` (the last batch may
    be short). Training stops once the validation objective has not improved
    for ``patience`` epochs; the best-validation parameters are returned.
    """
    mc = config.model
    kind = mc.kind
    if not kind.supervised:
        dataset = dataset.subset(np.flatnonzero(dataset.y == 1))
    if len(dataset) < 2:
        raise ConfigError(f"{kind.value} needs at least 2 training points, got {len(dataset)}")

    init_ss, split_ss, shuffle_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(4)
    params = build_params(mc, dataset.dim, np.random.default_rng(init_ss))
    train_part, val_part = split_validation(dataset, config.validation_fraction,
                                            np.random.default_rng(split_ss))
    if len(train_part) == 0 or len(val_part) == 0:
        raise ConfigError("validation split left an empty part")
    shuffle_rng = np.random.default_rng(shuffle_ss)
    noise_rng = np.random.default_rng(noise_ss)

    state = AdamState.create(params, config.lr, config.beta1, config.beta2, config.epsilon)
    tlog = TrainLog()
    best_params, best_val, since_best = params, np.inf, 0
    n, k = len(train_part), config.batch_size
    x, y = train_part.x, train_part.y

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, k)):
            idx = order[start:start + k]
            loss, grads = model_loss_and_grads(kind, params, x[idx], y[idx], mc, rng=noise_rng)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {b}")
            try:
                params, state = adam_step(state, params, grads)
            except NumericalError as e:
                raise NumericalError(f"epoch {epoch}, batch {b}: {e}") from None
            total += loss * len(idx)
        val = _mean_loss(kind, params, val_part, mc)
        if not np.isfinite(val):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        if kind.reconstruction_based:
            normal, anomaly = evaluate_epoch_metrics(params, kind, train_part, mc.distance)
        else:
            normal = anomaly = None
        tlog.records.append(EpochRecord(epoch, total / n, val, normal, anomaly))
        if val < best_val:
            best_params, best_val, since_best = params, val, 0
            tlog.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= config.patience:
                log.debug("%s: early stop at epoch %d (best %d)", kind.value, epoch, tlog.best_epoch)
                break
    return TrainedModel(kind, best_params, config, tlog)
