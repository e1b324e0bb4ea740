"""Datasets: 2D toy generator, labeled CSV I/O, min-max scaling, and the
assembly of train/test splits for the three experimental settings.

Roles drive everything here. Labels are derived from roles (normal -> y=1,
anomalies -> y=0) except for Setting-2 contaminants, which keep the
unknown-anomaly role but are relabelled y=1 when moved into training.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .nn import as_rng


class Role(IntEnum):
    NORMAL = 0
    KNOWN = 1
    UNKNOWN = 2

    @property
    def token(self) -> str:
        return ROLE_TOKENS[self]


ROLE_TOKENS = {Role.NORMAL: "normal", Role.KNOWN: "known_anomaly", Role.UNKNOWN: "unknown_anomaly"}
TOKEN_ROLES = {v: k for k, v in ROLE_TOKENS.items()}


class LabeledPoint(NamedTuple):
    features: np.ndarray
    y: int
    role: Role


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points as parallel arrays: ``x`` (n, d), ``y`` (n,), ``role`` (n,)."""

    x: np.ndarray
    y: np.ndarray
    role: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, 0)
        if x.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {x.shape}")
        y = np.asarray(self.y, dtype=np.int64)
        role = np.asarray(self.role, dtype=np.int64)
        if y.shape != (len(x),) or role.shape != (len(x),):
            raise ShapeError("x, y and role must have the same length")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "role", role)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __getitem__(self, i: int) -> LabeledPoint:
        return LabeledPoint(self.x[i], int(self.y[i]), Role(int(self.role[i])))

    def __iter__(self) -> Iterator[LabeledPoint]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.x[idx], self.y[idx], self.role[idx], self.provenance)

    def count(self, role: Role) -> int:
        return int(np.sum(self.role == role))

    def equals(self, other: "Dataset") -> bool:
        return (self.x.shape == other.x.shape and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y) and np.array_equal(self.role, other.role))


def from_roles(x, role, provenance: str = "") -> Dataset:
    role = np.asarray(role, dtype=np.int64)
    return Dataset(x, (role == Role.NORMAL).astype(np.int64), role, provenance)


# Per-point jitter of the two moons. At 0.3 the moons overlap enough that an
# autoencoder trained on normals alone separates them imperfectly, as in the
# reference results; at 0.1 they are almost disjoint.
TOY_NOISE_STD = 0.3


def gen_toy(n_normal: int = 10000, n_known: int = 10000, n_unknown: int = 10000,
            noise_std: float = TOY_NOISE_STD, seed=0) -> Dataset:
    """Two interleaving half circles plus a distant Gaussian blob.

    Normals lie on the upper unit half circle, known anomalies on the lower
    one shifted by (+1, -0.5); both get isotropic jitter ``noise_std``.
    Unknown anomalies are N((-3, 3), 0.3^2 I).
    """
    if min(n_normal, n_known, n_unknown) < 0:
        raise ConfigError("point counts must be >= 0")
    rng = as_rng(seed)
    t = rng.uniform(0.0, math.pi, size=n_normal)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    t = rng.uniform(0.0, math.pi, size=n_known)
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    moons = np.vstack([upper, lower])
    moons += noise_std * rng.standard_normal(moons.shape)
    blob = rng.normal(loc=(-3.0, 3.0), scale=0.3, size=(n_unknown, 2))
    x = np.vstack([moons, blob])
    role = np.repeat([Role.NORMAL, Role.KNOWN, Role.UNKNOWN], [n_normal, n_known, n_unknown])
    return from_roles(x, role, provenance=f"toy(seed={seed}, noise_std={noise_std})")


def write_csv(dataset: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{i}" for i in range(dataset.dim)] + ["role"])
    for row, r in zip(dataset.x, dataset.role):
        w.writerow([repr(float(v)) for v in row] + [ROLE_TOKENS[Role(int(r))]])
    return buf.getvalue()


def load_csv(path) -> Dataset:
    """Read ``f0,...,f{D-1},role`` rows; y is derived from the role column."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_csv(fh, provenance=str(path))


def parse_csv(fh, provenance: str = "") -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("line 1: missing header") from None
    dim = len(header) - 1
    if dim < 1 or header[-1] != "role" or header[:-1] != [f"f{i}" for i in range(dim)]:
        raise ParseError(f"line 1: header must be f0,...,f{{D-1}},role; got {','.join(header)}")
    xs, roles = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise ParseError(f"line {lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            feats = [float(v) for v in row[:-1]]
        except ValueError as e:
            raise ParseError(f"line {lineno}: {e}") from None
        if not all(math.isfinite(v) for v in feats):
            raise ParseError(f"line {lineno}: non-finite feature value")
        token = row[-1].strip()
        if token not in TOKEN_ROLES:
            raise ParseError(f"line {lineno}: unknown role {token!r}")
        xs.append(feats)
        roles.append(TOKEN_ROLES[token])
    x = np.asarray(xs, dtype=np.float64).reshape(len(xs), dim)
    return from_roles(x, roles, provenance)


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(x, dtype=np.float64) - self.lo) / safe
        # constant dimensions map to 0
        return np.where(span > 0, out, 0.0)


def minmax_fit(train: Dataset) -> MinMaxScaler:
    if len(train) == 0:
        raise ConfigError("cannot fit a scaler on an empty dataset")
    return MinMaxScaler(train.x.min(axis=0), train.x.max(axis=0))


def minmax_apply(scaler: MinMaxScaler, dataset: Dataset) -> Dataset:
    if scaler.lo.shape != (dataset.dim,):
        raise ShapeError(f"scaler fitted on {scaler.lo.size} dims, dataset has {dataset.dim}")
    return Dataset(scaler.transform(dataset.x), dataset.y, dataset.role, dataset.provenance)


@dataclass(frozen=True)
class SettingParams:
    """``train_fraction`` is the share of normals/known anomalies sent to train.

    ``contaminants`` applies to Setting 2; ``known_cap`` to Setting 3 (None
    keeps every known anomaly in the train share).
    """

    train_fraction: float = 0.5
    contaminants: int = 100
    known_cap: int | None = None


@dataclass(frozen=True, eq=False)
class ExperimentSplit:
    train: Dataset
    test: Dataset
    setting: int
    params: SettingParams
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)

    def manifest(self) -> dict:
        return {
            "setting": self.setting,
            "params": {"train_fraction": self.params.train_fraction,
                       "contaminants": self.params.contaminants,
                       "known_cap": self.params.known_cap},
            "train_index": self.train_index.tolist(),
            "test_index": self.test_index.tolist(),
            "contaminant_index": self.train_index[self.train.role == Role.UNKNOWN].tolist(),
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest())


def assemble_setting(dataset: Dataset, setting: int, params: SettingParams | None = None,
                     seed=0) -> ExperimentSplit:
    """Build a train/test split for Setting 1, 2 or 3.

    Normals and known anomalies are each shuffled and cut at
    ``train_fraction``. Unknown anomalies go to test, except that Setting 2
    moves ``contaminants`` of them into train relabelled as normal, and
    Setting 3 subsamples the train known anomalies down to ``known_cap``.
    """
    params = params or SettingParams()
    if setting not in (1, 2, 3):
        raise ConfigError(f"setting must be 1, 2 or 3, got {setting}")
    if not 0 < params.train_fraction < 1:
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = as_rng(seed)
    by_role = {r: np.flatnonzero(dataset.role == r) for r in Role}

    def cut(idx):
        idx = rng.permutation(idx)
        k = int(round(params.train_fraction * len(idx)))
        return idx[:k], idx[k:]

    n_tr, n_te = cut(by_role[Role.NORMAL])
    a_tr, a_te = cut(by_role[Role.KNOWN])
    unknown = rng.permutation(by_role[Role.UNKNOWN])
    if len(n_tr) == 0:
        raise ConfigError("no normal points in the training share")

    c_tr = unknown[:0]
    if setting == 2:
        if params.contaminants > len(unknown):
            raise ConfigError(f"requested {params.contaminants} contaminants, "
                              f"only {len(unknown)} unknown anomalies available")
        c_tr, unknown = unknown[:params.contaminants], unknown[params.contaminants:]
    if setting == 3 and params.known_cap is not None:
        if params.known_cap > len(a_tr):
            raise ConfigError(f"requested {params.known_cap} known anomalies, "
                              f"only {len(a_tr)} available for training")
        a_tr = a_tr[:params.known_cap]

    train_idx = np.sort(np.concatenate([n_tr, a_tr, c_tr]))
    test_idx = np.sort(np.concatenate([n_te, a_te, unknown]))
    train = dataset.subset(train_idx)
    train.y[train.role == Role.UNKNOWN] = 1
    test = dataset.subset(test_idx)
    return ExperimentSplit(train, test, setting, params, train_idx, test_idx)
