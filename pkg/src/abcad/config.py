"""JSON run configuration shared by the CLI and the experiment scripts.

Sections: ``data``, ``model``, ``train``, ``experiment``, ``output``. Missing
fields take defaults that reproduce the toy protocol; architecture defaults
depend on the data source (10-10 hidden / latent 1 for the toy data,
300-100 / latent 20 otherwise).
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any

from .data import TOY_NOISE_STD, Dataset, SettingParams, gen_toy, load_csv
from .errors import ConfigError
from .models import DISTANCES, ModelConfig, ModelKind
from .training import TrainConfig

TOY_ARCH = ((10, 10), 1)
DEFAULT_ARCH = ((300, 100), 20)
DEFAULT_ROSTER = ("ABC-AE", "ABC-DAE", "LRC", "DNN", "AE", "DAE")


@dataclass(frozen=True)
class DataConfig:
    source: str = "toy"
    path: str | None = None
    n_normal: int = 20000
    n_known: int = 20000
    n_unknown: int = 10000
    noise_std: float = TOY_NOISE_STD
    seed: int = 0
    scaling: bool | None = None      # None: on for csv, off for toy

    @property
    def scaling_enabled(self) -> bool:
        return self.source == "csv" if self.scaling is None else bool(self.scaling)


@dataclass(frozen=True)
class ModelSection:
    kind: str = "ABC-AE"
    kinds: tuple[str, ...] = DEFAULT_ROSTER
    hidden: tuple[int, ...] | None = None
    latent: int | None = None
    distance: str = "squared-l2"
    noise_std: float = 0.2
    clamp: float = 1e-10


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 100
    max_epochs: int = 300
    validation_fraction: float = 0.2
    patience: int = 10
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class ExperimentSection:
    setting: int = 1
    contaminants: int = 100
    known_cap: int | None = None
    known_sweep: tuple[int, ...] | None = None
    train_fraction: float = 0.5
    runs: int = 5
    base_seed: int = 0
    workers: int | None = None       # None: all available cores


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"


SECTIONS = {"data": DataConfig, "model": ModelSection, "train": TrainSection,
            "experiment": ExperimentSection, "output": OutputSection}


def _coerce(path: str, typ, value):
    """Best-effort check of a JSON value against a dataclass field annotation."""
    text = str(typ)
    if value is None:
        if "None" in text:
            return None
        raise ConfigError(f"{path}: must not be null")
    if text.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        inner = int if "int" in text else str
        try:
            return tuple(inner(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a list of {inner.__name__}") from None
    if text.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if text.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if text.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if text.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def _section_from_dict(name: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"{name}.{key}: unknown field")
        kwargs[key] = _coerce(f"{name}.{key}", fields[key].type, value)
    return cls(**kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        d, m, e, t = self.data, self.model, self.experiment, self.train
        if d.source not in ("toy", "csv"):
            raise ConfigError(f"data.source: expected 'toy' or 'csv', got {d.source!r}")
        if d.source == "csv" and not d.path:
            raise ConfigError("data.path: required when data.source is 'csv'")
        if min(d.n_normal, d.n_known, d.n_unknown) < 0:
            raise ConfigError("data: point counts must be >= 0")
        for path, kind in [("model.kind", m.kind)] + [(f"model.kinds[{i}]", k)
                                                      for i, k in enumerate(m.kinds)]:
            try:
                ModelKind(kind)
            except ValueError:
                raise ConfigError(f"{path}: unknown model kind {kind!r}") from None
        if not m.kinds:
            raise ConfigError("model.kinds: must name at least one model")
        if m.distance not in DISTANCES:
            raise ConfigError(f"model.distance: expected one of {DISTANCES}")
        if m.noise_std < 0:
            raise ConfigError("model.noise_std: must be >= 0")
        if not m.clamp > 0:
            raise ConfigError("model.clamp: must be > 0")
        if m.hidden is not None and (not m.hidden or min(m.hidden) < 1):
            raise ConfigError("model.hidden: widths must be positive")
        if m.latent is not None and m.latent < 1:
            raise ConfigError("model.latent: must be >= 1")
        if e.setting not in (1, 2, 3):
            raise ConfigError("experiment.setting: must be 1, 2 or 3")
        if e.runs < 1:
            raise ConfigError("experiment.runs: must be >= 1")
        if not 0 < e.train_fraction < 1:
            raise ConfigError("experiment.train_fraction: must be in (0, 1)")
        if e.contaminants < 0:
            raise ConfigError("experiment.contaminants: must be >= 0")
        if e.workers is not None and e.workers < 1:
            raise ConfigError("experiment.workers: must be >= 1")
        if not 0 < t.validation_fraction < 1:
            raise ConfigError("train.validation_fraction: must be in (0, 1)")
        if t.batch_size < 1:
            raise ConfigError("train.batch_size: must be >= 1")
        if t.patience < 1:
            raise ConfigError("train.patience: must be >= 1")
        if t.max_epochs < 0:
            raise ConfigError("train.max_epochs: must be >= 0")
        if not t.lr > 0:
            raise ConfigError("train.lr: must be > 0")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
        parts = {name: _section_from_dict(name, sc, raw.get(name, {})) for name, sc in SECTIONS.items()}
        return cls(**parts)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})") from None
        return cls.from_dict(raw)

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        new = _section_from_dict(section, SECTIONS[section],
                                 {**dataclasses.asdict(getattr(self, section)), **changes})
        return dataclasses.replace(self, **{section: new})

    def to_dict(self) -> dict[str, Any]:
        """Effective config with every default (including architecture) filled in."""
        out = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        hidden, latent = self.architecture
        out["model"]["hidden"] = list(hidden)
        out["model"]["latent"] = latent
        out["model"]["kinds"] = list(self.model.kinds)
        if out["experiment"]["known_sweep"] is not None:
            out["experiment"]["known_sweep"] = list(out["experiment"]["known_sweep"])
        out["experiment"]["workers"] = self.workers
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @property
    def architecture(self) -> tuple[tuple[int, ...], int]:
        hidden, latent = TOY_ARCH if self.data.source == "toy" else DEFAULT_ARCH
        if self.model.hidden is not None:
            hidden = self.model.hidden
        if self.model.latent is not None:
            latent = self.model.latent
        return tuple(hidden), latent

    @property
    def models(self) -> list[ModelKind]:
        return [ModelKind(k) for k in self.model.kinds]

    @property
    def runs(self) -> int:
        return self.experiment.runs

    @property
    def setting(self) -> int:
        return self.experiment.setting

    @property
    def base_seed(self) -> int:
        return self.experiment.base_seed

    @property
    def workers(self) -> int:
        return self.experiment.workers or os.cpu_count() or 1

    def setting_params(self) -> SettingParams:
        e = self.experiment
        return SettingParams(e.train_fraction, e.contaminants, e.known_cap)

    def model_config(self, kind) -> ModelConfig:
        hidden, latent = self.architecture
        m = self.model
        return ModelConfig(ModelKind(kind), hidden, latent, m.distance, m.noise_std, m.clamp)

    def train_config(self, kind, seed: int | None = None) -> TrainConfig:
        t = self.train
        return TrainConfig(self.model_config(kind), t.batch_size, t.max_epochs,
                           t.validation_fraction, t.patience, t.seed if seed is None else seed,
                           t.lr, t.beta1, t.beta2, t.epsilon)


def load_dataset(data: DataConfig) -> Dataset:
    if data.source == "toy":
        return gen_toy(data.n_normal, data.n_known, data.n_unknown, data.noise_std, data.seed)
    return load_csv(data.path)
