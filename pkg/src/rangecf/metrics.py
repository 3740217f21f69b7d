"""Evaluation metrics for sets of counterfactuals: set inconsistency
(modified Hausdorff), average percentile shift, sparsity, and the two
diversity measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class MetricUndefined(ValueError):
    """The metric has no value for this input (e.g. an empty CFE set).

    Callers aggregate these as missing data rather than zeros; treating a
    failed method as perfectly consistent would reward returning nothing.
    """


def _as_set(points: Iterable[Iterable[float]]) -> np.ndarray:
    arr = np.asarray(list(points), dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def inconsistency(set_a: Iterable[Iterable[float]], set_b: Iterable[Iterable[float]]) -> float:
    """Modified Hausdorff distance between two point sets:
    max of the two directed mean-of-min Euclidean distances."""
    a = _as_set(set_a)
    b = _as_set(set_b)
    if a.size == 0 or b.size == 0:
        raise MetricUndefined("inconsistency is undefined for empty sets")
    diff = a[:, None, :] - b[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    h_ab = float(np.mean(np.min(dist, axis=1)))
    h_ba = float(np.mean(np.min(dist, axis=0)))
    return max(h_ab, h_ba)


@dataclass(frozen=True)
class PercentileTable:
    """Per-feature sorted reference values for empirical percentiles.

    Percentiles use the mid-rank convention:
    Q(v) = (#{values < v} + 0.5 * #{values == v}) / N, in [0, 1].
    """

    columns: tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, rows: np.ndarray) -> "PercentileTable":
        rows = np.asarray(rows, dtype=float)
        return cls(columns=tuple(np.sort(rows[:, j]) for j in range(rows.shape[1])))

    @property
    def d(self) -> int:
        return len(self.columns)

    def percentile(self, feature: int, value: float) -> float:
        col = self.columns[feature]
        below = np.searchsorted(col, value, side="left")
        upto = np.searchsorted(col, value, side="right")
        return (below + 0.5 * (upto - below)) / len(col)

    def percentiles(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.percentile(j, v) for j, v in enumerate(np.asarray(x, dtype=float))])

    def summary(self, feature: int, probs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict[str, float]:
        col = self.columns[feature]
        return {f"p{int(p * 100)}": float(np.quantile(col, p)) for p in probs}


def aps(x: Iterable[float], cfes: Iterable[Iterable[float]], table: PercentileTable) -> float:
    """Average percentile shift: mean absolute change in empirical
    percentile position, over features and counterfactuals."""
    c = _as_set(cfes)
    if c.size == 0:
        raise MetricUndefined("aps is undefined for an empty set")
    x_arr = np.asarray(list(x), dtype=float)
    qx = table.percentiles(x_arr)
    total = 0.0
    for row in c:
        total += float(np.sum(np.abs(table.percentiles(row) - qx)))
    return total / (table.d * len(c))


def sparsity(x: Iterable[float], cfes: Iterable[Iterable[float]], atol: float = 0.0) -> float:
    """Fraction of feature slots left unchanged, averaged over the set.

    Endpoint replacement produces exact equality, so the default tolerance
    is zero; methods that move coordinates continuously should pass a small
    tolerance instead.
    """
    c = _as_set(cfes)
    if c.size == 0:
        raise MetricUndefined("sparsity is undefined for an empty set")
    x_arr = np.asarray(list(x), dtype=float)
    if atol == 0.0:
        unchanged = c == x_arr[None, :]
    else:
        unchanged = np.abs(c - x_arr[None, :]) <= atol
    return float(np.mean(unchanged))


@dataclass(frozen=True)
class MadScaler:
    """Per-feature median absolute deviation with a fallback divisor of 1
    for degenerate features, so L1/MAD distances are always defined."""

    divisors: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray, fallback: float = 1.0) -> "MadScaler":
        rows = np.asarray(rows, dtype=float)
        med = np.median(rows, axis=0)
        mad = np.median(np.abs(rows - med), axis=0)
        return cls(divisors=np.where(mad > 0.0, mad, fallback))

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(np.abs(np.asarray(a) - np.asarray(b)) / self.divisors))


def diversity(cfes: Iterable[Iterable[float]], mad: MadScaler) -> float:
    """Mean pairwise L1/MAD distance within the set; needs at least 2 points."""
    c = _as_set(cfes)
    k = len(c)
    if k < 2:
        raise MetricUndefined("diversity needs at least two counterfactuals")
    total = 0.0
    for i in range(k - 1):
        for j in range(i + 1, k):
            total += mad.distance(c[i], c[j])
    return 2.0 * total / (k * (k - 1))


def count_diversity(cfes: Iterable[Iterable[float]]) -> float:
    """Mean fraction of differing feature slots over all pairs in the set."""
    c = _as_set(cfes)
    k, d = c.shape
    if k < 2:
        raise MetricUndefined("count-diversity needs at least two counterfactuals")
    total = 0.0
    for i in range(k - 1):
        for j in range(i + 1, k):
            total += float(np.sum(c[i] != c[j]))
    return 2.0 * total / (k * (k - 1) * d)
