"""Reference counterfactual methods: exhaustive subset search (the oracle
for the enumerator), growing-sphere random search, and plain gradient
descent on the Lagrangian objective."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .enumerator import (
    CompiledConstraints,
    ConstraintSpec,
    Explanation,
    ExplanationSet,
    Status,
    compile_constraints,
)
from .features import FeatureSpace, Scaler, Subset, as_instance, partition_features, replace
from .models import Classifier, MlpClassifier


def brute_force_minimal_subsets(
    x: Iterable[float],
    f: Classifier,
    space: FeatureSpace,
    constraints: ConstraintSpec | None = None,
    max_abnormal: int = 20,
) -> ExplanationSet:
    """Evaluate every admissible subset of abnormal features and keep the
    minimal flipping ones. Exponential in the abnormal count; guarded.

    Fully general: minimality is checked against all flipping subsets, not
    just single-element removals, so this is a valid oracle for
    non-monotone classifiers too.
    """
    arr = as_instance(x, space.d)
    partition = partition_features(arr, space)
    d0 = partition.d0
    if d0 > max_abnormal:
        raise ValueError(f"{d0} abnormal features exceeds brute-force limit {max_abnormal}")
    compiled = compile_constraints(constraints or ConstraintSpec(), partition, arr, space)
    abnormal = partition.abnormal

    masks: list[int] = []
    targets: list[np.ndarray] = []
    for bits in range(2**d0):
        subset = frozenset(abnormal[j] for j in range(d0) if bits >> j & 1)
        if not compiled.mask_satisfies(subset):
            continue
        masks.append(bits)
        targets.append(replace(arr, subset, space))

    model_calls = len(targets)
    if targets:
        probs = f.predict_proba_batch(np.stack(targets))
    else:
        probs = np.empty(0)
    flipping = [
        (bits, float(p)) for bits, p in zip(masks, probs) if p >= f.threshold
    ]
    flipping.sort(key=lambda item: (bin(item[0]).count("1"), item[0]))

    minimal: list[tuple[int, float]] = []
    for bits, p in flipping:
        if any(prev & bits == prev for prev, _ in minimal):
            continue  # a smaller flipping subset is contained in this one
        minimal.append((bits, p))

    explanations = []
    for bits, p in minimal:
        subset = frozenset(abnormal[j] for j in range(d0) if bits >> j & 1)
        explanations.append(
            Explanation(
                subset=Subset.of(space.d, subset),
                cfe=replace(arr, subset, space),
                probability=p,
            )
        )
    status = Status.COMPLETE if explanations else Status.INFEASIBLE
    return ExplanationSet(
        explanations=tuple(explanations),
        model_calls=model_calls,
        pruned_subset_clauses=0,
        pruned_superset_clauses=0,
        status=status,
    )


@dataclass(frozen=True)
class GrowingSphereConfig:
    initial_radius: float = 0.1
    growth: float = 1.2
    samples_per_shell: int = 200
    max_radius: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.initial_radius, self.samples_per_shell, self.max_radius) <= 0:
            raise ValueError("sphere parameters must be positive")
        if self.growth <= 1.0:
            raise ValueError("growth factor must exceed 1")


@dataclass
class SearchOutcome:
    point: np.ndarray | None
    model_calls: int


def _sample_annulus(
    rng: np.random.Generator, center: np.ndarray, r_lo: float, r_hi: float, n: int
) -> np.ndarray:
    d = center.shape[0]
    directions = rng.standard_normal((n, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    directions /= norms
    # Radius density proportional to r^(d-1) gives uniform sampling in the shell.
    u = rng.random(n)
    radii = (r_lo**d + u * (r_hi**d - r_lo**d)) ** (1.0 / d)
    return center + directions * radii[:, None]


def growing_sphere(
    x: Iterable[float],
    f: Classifier,
    cfg: GrowingSphereConfig,
    scaler: Scaler | None = None,
) -> SearchOutcome:
    """Sample shells of increasing radius around the input (in scaled space
    when a scaler is given) until a favorably-labelled point appears, then
    greedily reset changed coordinates, largest change first, while the
    label holds."""
    arr = np.asarray(x, dtype=float)
    scaler = scaler or Scaler.identity(arr.shape[0])
    center = scaler.transform(arr)
    calls = 1
    if f.predict_proba(arr) >= f.threshold:
        return SearchOutcome(point=arr.copy(), model_calls=calls)

    rng = np.random.default_rng(cfg.seed)
    hit: np.ndarray | None = None
    r_lo, r_hi = 0.0, cfg.initial_radius
    while r_lo < cfg.max_radius:
        shell = _sample_annulus(rng, center, r_lo, min(r_hi, cfg.max_radius), cfg.samples_per_shell)
        raw = np.array([scaler.inverse_transform(s) for s in shell])
        probs = f.predict_proba_batch(raw)
        calls += len(raw)
        winners = np.nonzero(probs >= f.threshold)[0]
        if winners.size:
            hit = shell[winners[0]]
            break
        r_lo, r_hi = r_hi, r_hi * cfg.growth
    if hit is None:
        return SearchOutcome(point=None, model_calls=calls)

    # Sparsity pass: put coordinates back one at a time if the label survives.
    deltas = np.abs(hit - center)
    for i in np.argsort(-deltas):
        if hit[i] == center[i]:
            continue
        candidate = hit.copy()
        candidate[i] = center[i]
        calls += 1
        if f.predict_proba(scaler.inverse_transform(candidate)) >= f.threshold:
            hit = candidate
    return SearchOutcome(point=scaler.inverse_transform(hit), model_calls=calls)


@dataclass(frozen=True)
class PlainCfConfig:
    trade_off: float = 1.0
    step_size: float = 0.05
    max_iterations: int = 2000
    loss_tolerance: float = 1e-7
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trade_off <= 0 or self.step_size <= 0:
            raise ValueError("trade_off and step_size must be positive")


def plain_cf(
    x: Iterable[float],
    clf: MlpClassifier,
    cfg: PlainCfConfig,
    loss_trace: list[float] | None = None,
) -> SearchOutcome:
    """Gradient descent on squared distance plus weighted cross-entropy
    toward the favorable class, from a seeded random start near the input.

    Works in scaled space. The step size halves whenever a step would
    increase the loss, so the accepted loss sequence never increases
    (`loss_trace`, when given, collects it). Stops at the iteration cap or
    when the loss improvement falls below the tolerance; the final point
    counts only if its label flipped.
    """
    arr = np.asarray(x, dtype=float)
    x_scaled = clf.scaler.transform(arr)
    rng = np.random.default_rng(cfg.seed)
    c = x_scaled + rng.normal(0.0, cfg.init_scale, size=x_scaled.shape)
    model = clf.model
    eps = 1e-12

    def loss_and_grad(point: np.ndarray) -> tuple[float, np.ndarray, float]:
        p = float(model.forward(point[None, :])[0])
        ce = -math.log(max(p, eps))
        cost = float(np.sum((point - x_scaled) ** 2))
        grad = 2.0 * (point - x_scaled) + cfg.trade_off * model.input_gradient(point, target=1.0)
        return cost + cfg.trade_off * ce, grad, p

    step = cfg.step_size
    loss, grad, prob = loss_and_grad(c)
    calls = 1
    if loss_trace is not None:
        loss_trace.append(loss)
    for _ in range(cfg.max_iterations):
        if not math.isfinite(loss):
            raise FloatingPointError("non-finite loss in gradient descent")
        candidate = c - step * grad
        new_loss, new_grad, new_prob = loss_and_grad(candidate)
        calls += 1
        while new_loss > loss and step > 1e-12:
            step *= 0.5
            candidate = c - step * grad
            new_loss, new_grad, new_prob = loss_and_grad(candidate)
            calls += 1
        if new_loss > loss:
            break  # no descent direction left at the smallest step
        improvement = loss - new_loss
        c, loss, grad, prob = candidate, new_loss, new_grad, new_prob
        if loss_trace is not None:
            loss_trace.append(loss)
        if improvement < cfg.loss_tolerance:
            break
    if prob >= clf.threshold:
        return SearchOutcome(point=clf.scaler.inverse_transform(c), model_calls=calls)
    return SearchOutcome(point=None, model_calls=calls)
