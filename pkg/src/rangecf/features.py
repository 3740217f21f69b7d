"""Feature spaces, normal ranges, endpoint replacement, and dataset utilities.

A feature space declares, per feature, a closed normal interval and a
mutability flag. Given an instance, the features split into those inside
their interval ("normal") and those outside ("abnormal"). Replacement moves
a chosen subset of abnormal features onto the nearest interval endpoint and
leaves everything else untouched.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INF = float("inf")


class DatasetError(Exception):
    """Base class for dataset parsing failures."""


class EmptyFileError(DatasetError):
    pass


class UnknownColumnError(DatasetError):
    pass


class NonNumericCellError(DatasetError):
    pass


class Mutability(str, Enum):
    FREE = "free"
    IMMUTABLE = "immutable"
    INCREASE_ONLY = "increase_only"
    DECREASE_ONLY = "decrease_only"


@dataclass(frozen=True)
class NormalRange:
    """Closed interval [lower, upper]; either bound may be infinite."""

    lower: float = -INF
    upper: float = INF

    def __post_init__(self) -> None:
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("range bounds must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) or math.isfinite(self.upper)

    def contains(self, value: float) -> bool:
        # Boundary values count as normal (closed interval), so replacing a
        # feature with an endpoint always yields a normal feature.
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class Feature:
    name: str
    range: NormalRange = field(default_factory=NormalRange)
    mutability: Mutability = Mutability.FREE


@dataclass(frozen=True)
class FeatureSpace:
    """Ordered feature declarations. Indices are 0-based internally;
    anything user-facing (reports, JSON output) uses 1-based indices."""

    features: tuple[Feature, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def lowers(self) -> np.ndarray:
        return np.array([f.range.lower for f in self.features], dtype=float)

    def uppers(self) -> np.ndarray:
        return np.array([f.range.upper for f in self.features], dtype=float)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def to_json_obj(self) -> list[dict]:
        out = []
        for f in self.features:
            out.append(
                {
                    "name": f.name,
                    "lower": None if f.range.lower == -INF else f.range.lower,
                    "upper": None if f.range.upper == INF else f.range.upper,
                    "mutability": f.mutability.value,
                }
            )
        return out

    @classmethod
    def from_json_obj(cls, obj: Sequence[dict]) -> "FeatureSpace":
        feats = []
        for entry in obj:
            lower = entry.get("lower")
            upper = entry.get("upper")
            feats.append(
                Feature(
                    name=entry["name"],
                    range=NormalRange(
                        lower=-INF if lower is None else float(lower),
                        upper=INF if upper is None else float(upper),
                    ),
                    mutability=Mutability(entry.get("mutability", "free")),
                )
            )
        return cls(features=tuple(feats))


def load_schema(path: str | Path) -> tuple[FeatureSpace, str | None]:
    """Load a feature-space schema file.

    The file is either a bare array of feature entries or an object
    {"features": [...], "label_column": "..."}; the wrapped form carries the
    dataset's label column name.
    """
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, list):
        return FeatureSpace.from_json_obj(obj), None
    return FeatureSpace.from_json_obj(obj["features"]), obj.get("label_column")


def save_schema(space: FeatureSpace, path: str | Path, label_column: str | None = None) -> None:
    obj: object = space.to_json_obj()
    if label_column is not None:
        obj = {"features": obj, "label_column": label_column}
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def as_instance(x: Iterable[float], d: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float vector, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"instance must be 1-D, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ValueError(f"instance has length {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("instance entries must be finite")
    return arr


@dataclass(frozen=True)
class FeaturePartition:
    """Disjoint index sets: features outside their normal range vs. inside."""

    abnormal: tuple[int, ...]
    normal: tuple[int, ...]

    @property
    def d0(self) -> int:
        return len(self.abnormal)


@dataclass(frozen=True)
class Subset:
    """A subset of feature indices together with the ambient dimension,
    so that the 0/1 mask vector is always derivable."""

    dim: int
    indices: frozenset[int]

    def __post_init__(self) -> None:
        if any(i < 0 or i >= self.dim for i in self.indices):
            raise ValueError("subset index out of range")

    @classmethod
    def of(cls, dim: int, indices: Iterable[int]) -> "Subset":
        return cls(dim=dim, indices=frozenset(indices))

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.dim, dtype=float)
        if self.indices:
            m[sorted(self.indices)] = 1.0
        return m

    def sorted(self) -> list[int]:
        return sorted(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def _subset_indices(subset: Subset | Iterable[int]) -> frozenset[int]:
    if isinstance(subset, Subset):
        return subset.indices
    return frozenset(subset)


def partition_features(x: Iterable[float], space: FeatureSpace) -> FeaturePartition:
    """Split feature indices into abnormal (outside the closed normal range)
    and normal (inside, boundary included)."""
    arr = as_instance(x, space.d)
    abnormal = []
    normal = []
    for i, f in enumerate(space.features):
        (abnormal if not f.range.contains(arr[i]) else normal).append(i)
    return FeaturePartition(abnormal=tuple(abnormal), normal=tuple(normal))


def replacement_target(
    x: Iterable[float], subset: Subset | Iterable[int], space: FeatureSpace
) -> np.ndarray:
    """Componentwise replacement values: each selected out-of-range feature
    moves to the nearest endpoint of its normal range, everything else stays.

    Total by definition: a selected feature already inside its range keeps
    its value, which is what makes repeated replacement idempotent.
    """
    arr = as_instance(x, space.d)
    out = arr.copy()
    for i in sorted(_subset_indices(subset)):
        rng = space.features[i].range
        if arr[i] < rng.lower:
            out[i] = rng.lower
        elif arr[i] > rng.upper:
            out[i] = rng.upper
    return out


def replacement_target_guided(
    x: Iterable[float], subset: Subset | Iterable[int], guide: Iterable[float]
) -> np.ndarray:
    """Replacement values taken from a guide point instead of range endpoints,
    for settings where no normal ranges exist and every feature is in play."""
    arr = np.asarray(x, dtype=float)
    g = np.asarray(guide, dtype=float)
    if arr.shape != g.shape:
        raise ValueError(f"guide shape {g.shape} does not match instance shape {arr.shape}")
    out = arr.copy()
    idx = sorted(_subset_indices(subset))
    if idx:
        out[idx] = g[idx]
    return out


def replace(x: Iterable[float], subset: Subset | Iterable[int], space: FeatureSpace) -> np.ndarray:
    """Apply the replacement as mask algebra: x*(1-m) + target*m.

    Equivalent to `replacement_target`; kept separate so the mask form and the
    componentwise form can be checked against each other.
    """
    arr = as_instance(x, space.d)
    indices = _subset_indices(subset)
    m = Subset.of(space.d, indices).mask
    eta = replacement_target(arr, indices, space)
    return arr * (1.0 - m) + eta * m


@dataclass(frozen=True)
class Dataset:
    rows: np.ndarray
    labels: np.ndarray
    space: FeatureSpace

    def __post_init__(self) -> None:
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        if self.rows.shape[0] != self.labels.shape[0]:
            raise ValueError("row count must equal label count")
        if self.rows.shape[1] != self.space.d:
            raise ValueError("row width must equal feature count")

    @property
    def n(self) -> int:
        return self.rows.shape[0]


SYNTHETIC_LOWER_ENDPOINTS = (0.55, 0.45, 0.05, 0.55)


def synthetic_feature_space() -> FeatureSpace:
    """Four-feature space with lower endpoints only (uppers unbounded)."""
    return FeatureSpace(
        features=tuple(
            Feature(name=f"x{i + 1}", range=NormalRange(lower=lo))
            for i, lo in enumerate(SYNTHETIC_LOWER_ENDPOINTS)
        )
    )


def synthetic_label(row: np.ndarray) -> int:
    """Label rule for the synthetic dataset.

    The third disjunct is implied by the second; it is kept verbatim so the
    generated labels match the published rule exactly.
    """
    x1, x2, x3 = row[0], row[1], row[2]
    return int((x1 > 0.5) or (x2 > 0.4 and x3 > 0.0) or (x2 > 0.4 and x3 > 0.5))


def generate_synthetic(n: int, seed: int) -> Dataset:
    """n rows of 4 i.i.d. standard-normal features, labelled by the fixed rule."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, 4))
    labels = np.array([synthetic_label(r) for r in rows], dtype=int)
    return Dataset(rows=rows, labels=labels, space=synthetic_feature_space())


def load_csv(path: str | Path, schema: FeatureSpace, label_column: str) -> Dataset:
    """Parse a headered CSV into a Dataset.

    Rows with any missing (empty) cell among the used columns are dropped.
    Unknown columns, non-numeric cells, and empty files raise distinct errors.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFileError(f"{path}: no header row")
        header = set(reader.fieldnames)
        missing = [c for c in (*schema.names, label_column) if c not in header]
        if missing:
            raise UnknownColumnError(f"{path}: missing column(s) {missing}")
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, record in enumerate(reader, start=2):
            cells = [record[name] for name in schema.names] + [record[label_column]]
            if any(c is None or str(c).strip() == "" for c in cells):
                continue  # missing value: drop the row
            try:
                values = [float(record[name]) for name in schema.names]
                label = float(record[label_column])
            except ValueError as exc:
                raise NonNumericCellError(f"{path}:{lineno}: {exc}") from exc
            if label not in (0.0, 1.0):
                raise NonNumericCellError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            rows.append(values)
            labels.append(int(label))
    if not rows:
        raise EmptyFileError(f"{path}: no usable data rows")
    return Dataset(rows=np.array(rows, dtype=float), labels=np.array(labels, dtype=int), space=schema)


def load_instances_csv(path: str | Path, schema: FeatureSpace) -> np.ndarray:
    """Read unlabeled instances from a headered CSV; extra columns are
    ignored, rows with missing cells in schema columns are dropped."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFileError(f"{path}: no header row")
        missing = [c for c in schema.names if c not in set(reader.fieldnames)]
        if missing:
            raise UnknownColumnError(f"{path}: missing column(s) {missing}")
        rows: list[list[float]] = []
        for lineno, record in enumerate(reader, start=2):
            cells = [record[name] for name in schema.names]
            if any(c is None or str(c).strip() == "" for c in cells):
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise NonNumericCellError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise EmptyFileError(f"{path}: no usable data rows")
    return np.array(rows, dtype=float)


def split_train_test(ds: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split with |train| = round(ratio * n)."""
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_train = int(round(ratio * ds.n))
    tr, te = perm[:n_train], perm[n_train:]
    return (
        Dataset(rows=ds.rows[tr], labels=ds.labels[tr], space=ds.space),
        Dataset(rows=ds.rows[te], labels=ds.labels[te], space=ds.space),
    )


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardizer fitted on training rows.

    Zero-variance features pass through unchanged (divisor clamped to 1).
    """

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Scaler":
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean=mean, scale=std)

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(mean=np.zeros(d), scale=np.ones(d))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def to_json_obj(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Scaler":
        return cls(mean=np.array(obj["mean"], dtype=float), scale=np.array(obj["scale"], dtype=float))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_obj(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "Scaler":
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))
