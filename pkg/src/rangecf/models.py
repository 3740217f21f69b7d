"""Binary probability models: the classifier interface, a rule-based monotone
classifier usable as a ground-truth oracle, and a small from-scratch MLP
(ReLU hidden layers, sigmoid output) with analytic gradients and an Adam
trainer.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import FeatureSpace, Scaler, as_instance, partition_features, replace

MODEL_FORMAT_VERSION = 1


class ModelFormatError(Exception):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TrainingDiverged(Exception):
    """Loss became non-finite during training."""


class Classifier(ABC):
    """Black-box probability function with a decision threshold.

    predict_label(x) == 1 iff predict_proba(x) >= threshold; evaluation has
    no side effects, so classifiers are safe to share across workers.
    """

    threshold: float = 0.5

    @abstractmethod
    def predict_proba(self, x: Iterable[float]) -> float: ...

    def predict_proba_batch(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.predict_proba(r) for r in np.asarray(rows, dtype=float)])

    def predict_label(self, x: Iterable[float]) -> int:
        return int(self.predict_proba(x) >= self.threshold)

    def predict_label_batch(self, rows: np.ndarray) -> np.ndarray:
        return (self.predict_proba_batch(rows) >= self.threshold).astype(int)


@dataclass(frozen=True)
class ThresholdLiteral:
    """Single comparison: feature > cutoff (greater=True) or < cutoff."""

    feature: int
    cutoff: float
    greater: bool = True

    def holds(self, x: np.ndarray) -> bool:
        return bool(x[self.feature] > self.cutoff if self.greater else x[self.feature] < self.cutoff)


class RuleClassifier(Classifier):
    """Disjunction of conjunctions of threshold literals; output is exactly
    0 or 1. With all literals pointing '>', the function is nondecreasing in
    every feature, which makes it a verifiable stand-in for learned models in
    subset-search tests."""

    def __init__(self, clauses: Sequence[Sequence[ThresholdLiteral]], threshold: float = 0.5):
        if not clauses or any(len(c) == 0 for c in clauses):
            raise ValueError("rule must be a nonempty disjunction of nonempty conjunctions")
        self.clauses = tuple(tuple(c) for c in clauses)
        self.threshold = threshold

    def predict_proba(self, x: Iterable[float]) -> float:
        arr = np.asarray(x, dtype=float)
        return 1.0 if any(all(lit.holds(arr) for lit in clause) for clause in self.clauses) else 0.0

    def predict_proba_batch(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        hit = np.zeros(rows.shape[0], dtype=bool)
        for clause in self.clauses:
            conj = np.ones(rows.shape[0], dtype=bool)
            for lit in clause:
                col = rows[:, lit.feature]
                conj &= (col > lit.cutoff) if lit.greater else (col < lit.cutoff)
            hit |= conj
        return hit.astype(float)


def synthetic_rule_classifier() -> RuleClassifier:
    """The synthetic dataset's label rule as a classifier. Monotone
    nondecreasing in every feature (all literals point '>')."""
    return RuleClassifier(
        clauses=[
            [ThresholdLiteral(0, 0.5)],
            [ThresholdLiteral(1, 0.4), ThresholdLiteral(2, 0.0)],
            [ThresholdLiteral(1, 0.4), ThresholdLiteral(2, 0.5)],
        ]
    )


def random_monotone_rule(
    d: int,
    rng: np.random.Generator,
    reference: np.ndarray,
    flip_values: np.ndarray,
    max_clauses: int = 4,
    max_literals: int = 4,
) -> RuleClassifier:
    """Random monotone DNF over d features, built relative to a reference
    point and the values features jump to when replaced.

    Every literal points '>'. Cutoffs mostly sit between reference[i] and
    flip_values[i] so replacement can flip them; a few are already true or
    unreachable to exercise degenerate clauses.
    """
    clauses = []
    for _ in range(int(rng.integers(1, max_clauses + 1))):
        size = int(rng.integers(1, min(max_literals, d) + 1))
        feats = rng.choice(d, size=size, replace=False)
        literals = []
        for i in feats:
            roll = rng.random()
            lo, hi = float(reference[i]), float(flip_values[i])
            if roll < 0.8:
                cutoff = float(rng.uniform(lo, hi))  # flippable by replacement
            elif roll < 0.9:
                cutoff = lo - abs(rng.normal()) - 1e-6  # already true
            else:
                cutoff = hi + abs(rng.normal()) + 1e-6  # never true
            literals.append(ThresholdLiteral(int(i), cutoff))
        clauses.append(literals)
    return RuleClassifier(clauses)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos_mask = z >= 0
    out[pos_mask] = 1.0 / (1.0 + np.exp(-z[pos_mask]))
    ez = np.exp(z[~pos_mask])
    out[~pos_mask] = ez / (1.0 + ez)
    return out


class MlpModel:
    """Three weight layers: d -> h1 -> h2 -> 1, ReLU hidden, sigmoid output."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != 3 or len(biases) != 3:
            raise ModelFormatError("expected exactly 3 weight matrices and 3 bias vectors")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ModelFormatError("inconsistent layer shapes")
        for prev, nxt in zip(self.weights[:-1], self.weights[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise ModelFormatError("inconsistent layer shapes")
        if self.weights[2].shape[0] != 1:
            raise ModelFormatError("output layer must have width 1")

    @classmethod
    def init(cls, d: int, hidden: tuple[int, int], seed: int) -> "MlpModel":
        # Uniform init scaled by fan-in.
        rng = np.random.default_rng(seed)
        sizes = [d, hidden[0], hidden[1], 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def _forward_full(self, rows: np.ndarray):
        z1 = rows @ self.weights[0].T + self.biases[0]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.weights[1].T + self.biases[1]
        a2 = np.maximum(z2, 0.0)
        z3 = a2 @ self.weights[2].T + self.biases[2]
        p = _sigmoid(z3[:, 0])
        return z1, a1, z2, a2, p

    def forward(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input width {rows.shape[1]} != model input {self.layer_sizes[0]}")
        return self._forward_full(rows)[-1]

    def backward(
        self, rows: np.ndarray, labels: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray, float]:
        """Gradients of mean binary cross-entropy w.r.t. all parameters and
        the inputs. Returns (weight grads, bias grads, input grads, loss)."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        labels = np.atleast_1d(np.asarray(labels, dtype=float))
        if rows.shape[0] != labels.shape[0]:
            raise ValueError("rows/labels length mismatch")
        n = rows.shape[0]
        z1, a1, z2, a2, p = self._forward_full(rows)
        eps = 1e-12
        loss = float(-np.mean(labels * np.log(p + eps) + (1 - labels) * np.log(1 - p + eps)))
        dz3 = ((p - labels) / n)[:, None]
        gw3 = dz3.T @ a2
        gb3 = dz3.sum(axis=0)
        da2 = dz3 @ self.weights[2]
        dz2 = da2 * (z2 > 0)
        gw2 = dz2.T @ a1
        gb2 = dz2.sum(axis=0)
        da1 = dz2 @ self.weights[1]
        dz1 = da1 * (z1 > 0)
        gw1 = dz1.T @ rows
        gb1 = dz1.sum(axis=0)
        dx = dz1 @ self.weights[0]
        return [gw1, gw2, gw3], [gb1, gb2, gb3], dx, loss

    def input_gradient(self, x: np.ndarray, target: float = 1.0) -> np.ndarray:
        """Gradient of single-sample cross-entropy toward `target` w.r.t. x."""
        _, _, dx, _ = self.backward(np.atleast_2d(x), np.array([target]))
        return dx[0]

    def to_json_obj(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "layers": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": "relu",
            "output": "sigmoid",
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MlpModel":
        try:
            version = obj["version"]
        except (TypeError, KeyError) as exc:
            raise ModelFormatError("missing version field") from exc
        if version != MODEL_FORMAT_VERSION:
            raise ModelVersionError(f"unsupported model version {version}")
        if obj.get("activation") != "relu" or obj.get("output") != "sigmoid":
            raise ModelFormatError("unsupported activation configuration")
        try:
            weights = [np.array(w, dtype=float) for w in obj["weights"]]
            biases = [np.array(b, dtype=float) for b in obj["biases"]]
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(str(exc)) from exc
        model = cls(weights, biases)
        if obj.get("layers") != model.layer_sizes:
            raise ModelFormatError("declared layer sizes do not match weight shapes")
        return model


def save_model(model: MlpModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_json_obj(), fh)


def load_model(path: str | Path) -> MlpModel:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return MlpModel.from_json_obj(obj)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 30
    hidden: tuple[int, int] = (32, 16)
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.learning_rate, self.beta1, self.beta2, self.eps) <= 0:
            raise ValueError("optimizer constants must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass(frozen=True)
class TrainReport:
    train_accuracy: float
    test_accuracy: float
    final_loss: float
    epochs: int


def train_mlp(
    train_rows: np.ndarray,
    train_labels: np.ndarray,
    test_rows: np.ndarray,
    test_labels: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[MlpModel, TrainReport]:
    """Adam on mini-batch binary cross-entropy; deterministic for a fixed
    seed (init and shuffling both come from it)."""
    train_rows = np.asarray(train_rows, dtype=float)
    train_labels = np.asarray(train_labels, dtype=float)
    model = MlpModel.init(train_rows.shape[1], cfg.hidden, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)

    params = model.weights + model.biases
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    last_loss = math.nan
    for _ in range(cfg.epochs):
        perm = rng.permutation(train_rows.shape[0])
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            gw, gb, _, loss = model.backward(train_rows[batch], train_labels[batch])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            last_loss = loss
            step += 1
            grads = gw + gb
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                m_hat = m / (1 - cfg.beta1**step)
                v_hat = v / (1 - cfg.beta2**step)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)

    def accuracy(rows: np.ndarray, labels: np.ndarray) -> float:
        if len(rows) == 0:
            return math.nan
        pred = (model.forward(rows) >= 0.5).astype(int)
        return float(np.mean(pred == labels))

    report = TrainReport(
        train_accuracy=accuracy(train_rows, train_labels),
        test_accuracy=accuracy(np.asarray(test_rows, dtype=float), np.asarray(test_labels)),
        final_loss=last_loss,
        epochs=cfg.epochs,
    )
    return model, report


class MlpClassifier(Classifier):
    """MLP composed with a feature scaler so it can be queried on raw
    (unscaled) instances like every other classifier."""

    def __init__(self, model: MlpModel, scaler: Scaler, threshold: float = 0.5):
        self.model = model
        self.scaler = scaler
        self.threshold = threshold

    def predict_proba(self, x: Iterable[float]) -> float:
        arr = np.asarray(x, dtype=float)
        return float(self.model.forward(self.scaler.transform(arr)[None, :])[0])

    def predict_proba_batch(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        scaled = (rows - self.scaler.mean) / self.scaler.scale
        return self.model.forward(scaled)


def audit_monotonicity(
    f: Classifier, x: np.ndarray, space: FeatureSpace, max_abnormal: int = 12
) -> list[tuple[frozenset[int], frozenset[int]]]:
    """Brute-force check that replacing more abnormal features never lowers
    the favorable probability. Returns violating (subset, superset) pairs
    where the superset adds one feature; empty list means monotone over this
    instance's subset lattice."""
    x = as_instance(x, space.d)
    abnormal = partition_features(x, space).abnormal
    d0 = len(abnormal)
    if d0 > max_abnormal:
        raise ValueError(f"{d0} abnormal features exceeds audit limit {max_abnormal}")
    probs: dict[int, float] = {}
    for bits in range(2**d0):
        subset = frozenset(abnormal[j] for j in range(d0) if bits >> j & 1)
        probs[bits] = f.predict_proba(replace(x, subset, space))
    violations = []
    for bits in range(2**d0):
        for j in range(d0):
            if not bits >> j & 1:
                bigger = bits | (1 << j)
                if probs[bigger] < probs[bits]:
                    violations.append(
                        (
                            frozenset(abnormal[k] for k in range(d0) if bits >> k & 1),
                            frozenset(abnormal[k] for k in range(d0) if bigger >> k & 1),
                        )
                    )
    return violations
