"""Robustness experiment drivers: explain the same instances under retrained
model pairs or under Gaussian input perturbations, and score the agreement
between the resulting counterfactual sets.

Each (instance, method, trial) becomes one row; aggregation excludes missing
data (empty CFE sets, unsupported model types) and reports how much was
missing instead of silently zeroing it.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import GrowingSphereConfig, PlainCfConfig, growing_sphere, plain_cf
from .enumerator import ConstraintSpec, enumerate_explanations
from .features import Dataset, FeatureSpace, Scaler, split_train_test
from .metrics import (
    MadScaler,
    MetricUndefined,
    PercentileTable,
    aps,
    count_diversity,
    diversity,
    inconsistency,
    sparsity,
)
from .models import Classifier, MlpClassifier, TrainConfig, train_mlp
from .seeds import derive_seed

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BASELINE_SPARSITY_ATOL = 1e-9  # applied in scaled space

KNOWN_METHODS = ("minsat", "gs", "plaincf")


@dataclass(frozen=True)
class PerturbationSpec:
    sigmas: tuple[float, ...] = (0.0001, 0.001, 0.01, 0.1)
    trials_per_sigma: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigma values must be positive")
        if self.trials_per_sigma < 1:
            raise ValueError("trials_per_sigma must be >= 1")


@dataclass(frozen=True)
class RetrainSpec:
    num_models: int = 2
    init_seeds: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.num_models < 2:
            raise ValueError("need at least two models to compare")
        if self.init_seeds is not None and len(self.init_seeds) != self.num_models:
            raise ValueError("init_seeds length must equal num_models")


@dataclass
class TrialRow:
    setting: str  # "retrain" | "perturb"
    sigma: float | None
    trial: int
    instance_id: int
    method: str
    k: int
    model_calls: int
    inconsistency: float | None
    validity: float | None
    sparsity: float | None
    aps: float | None
    diversity: float | None
    count_diversity: float | None
    missing_reason: str = ""


@dataclass(frozen=True)
class MethodContext:
    space: FeatureSpace
    scaler: Scaler
    table: PercentileTable
    mad: MadScaler
    gs_cfg: GrowingSphereConfig = GrowingSphereConfig()
    pcf_cfg: PlainCfConfig = PlainCfConfig()
    # Applied to the subset enumerator only; the sampling baselines have no
    # constraint support.
    constraints: "ConstraintSpec | None" = None


@dataclass
class CfeSet:
    """Raw-space CFE vectors produced by one method for one instance."""

    vectors: np.ndarray  # (k, d); k may be 0
    model_calls: int
    exact_sparsity: bool  # endpoint replacement: compare without tolerance

    @property
    def k(self) -> int:
        return 0 if self.vectors.size == 0 else self.vectors.shape[0]


def _empty_set(calls: int = 0, exact: bool = True) -> CfeSet:
    return CfeSet(vectors=np.empty((0, 0)), model_calls=calls, exact_sparsity=exact)


def generate_cfes(
    method: str,
    x: np.ndarray,
    clf: Classifier,
    ctx: MethodContext,
    k: int,
    seed: int,
) -> CfeSet:
    """Produce a set of counterfactuals for one instance.

    Single-shot methods (gs, plaincf) run k times with distinct derived
    seeds to match the subset enumerator's set size k.
    """
    if method == "minsat":
        result = enumerate_explanations(x, clf, ctx.space, ctx.constraints)
        if not result.explanations:
            return _empty_set(result.model_calls)
        return CfeSet(vectors=result.cfes(), model_calls=result.model_calls, exact_sparsity=True)
    if method == "gs":
        points, calls = [], 0
        for j in range(max(k, 1)):
            cfg = GrowingSphereConfig(
                initial_radius=ctx.gs_cfg.initial_radius,
                growth=ctx.gs_cfg.growth,
                samples_per_shell=ctx.gs_cfg.samples_per_shell,
                max_radius=ctx.gs_cfg.max_radius,
                seed=derive_seed(seed, f"gs-{j}"),
            )
            outcome = growing_sphere(x, clf, cfg, scaler=ctx.scaler)
            calls += outcome.model_calls
            if outcome.point is not None:
                points.append(outcome.point)
        if not points:
            return _empty_set(calls, exact=False)
        return CfeSet(vectors=np.stack(points), model_calls=calls, exact_sparsity=False)
    if method == "plaincf":
        if not isinstance(clf, MlpClassifier):
            raise TypeError("plaincf needs a differentiable MLP classifier")
        points, calls = [], 0
        for j in range(max(k, 1)):
            cfg = PlainCfConfig(
                trade_off=ctx.pcf_cfg.trade_off,
                step_size=ctx.pcf_cfg.step_size,
                max_iterations=ctx.pcf_cfg.max_iterations,
                loss_tolerance=ctx.pcf_cfg.loss_tolerance,
                init_scale=ctx.pcf_cfg.init_scale,
                seed=derive_seed(seed, f"plaincf-{j}"),
            )
            outcome = plain_cf(x, clf, cfg)
            calls += outcome.model_calls
            if outcome.point is not None:
                points.append(outcome.point)
        if not points:
            return _empty_set(calls, exact=False)
        return CfeSet(vectors=np.stack(points), model_calls=calls, exact_sparsity=False)
    raise ValueError(f"unknown method {method!r}; known: {KNOWN_METHODS}")


def _quality(x: np.ndarray, cfes: CfeSet, ctx: MethodContext, clf: Classifier) -> dict:
    if cfes.k == 0:
        return {"validity": None, "sparsity": None, "aps": None, "diversity": None, "count_diversity": None}
    labels = clf.predict_label_batch(cfes.vectors)
    if cfes.exact_sparsity:
        sp = sparsity(x, cfes.vectors)
    else:
        scaled = np.array([ctx.scaler.transform(v) for v in cfes.vectors])
        sp = sparsity(ctx.scaler.transform(x), scaled, atol=BASELINE_SPARSITY_ATOL)
    out = {
        "validity": float(np.mean(labels)),
        "sparsity": sp,
        "aps": aps(x, cfes.vectors, ctx.table),
        "diversity": None,
        "count_diversity": None,
    }
    if cfes.k >= 2:
        out["diversity"] = diversity(cfes.vectors, ctx.mad)
        out["count_diversity"] = count_diversity(cfes.vectors)
    return out


def _pair_inconsistency(a: CfeSet, b: CfeSet, scaler: Scaler) -> tuple[float | None, str]:
    if a.k == 0 or b.k == 0:
        return None, "empty_set"
    sa = np.array([scaler.transform(v) for v in a.vectors])
    sb = np.array([scaler.transform(v) for v in b.vectors])
    try:
        return inconsistency(sa, sb), ""
    except MetricUndefined:
        return None, "empty_set"


def train_model_pool(
    train: Dataset,
    test: Dataset,
    scaler: Scaler,
    spec: RetrainSpec,
    cfg: TrainConfig,
    master_seed: int,
) -> list[MlpClassifier]:
    seeds = spec.init_seeds or tuple(
        derive_seed(master_seed, f"retrain-model-{i}") for i in range(spec.num_models)
    )
    pool = []
    for s in seeds:
        model_cfg = TrainConfig(
            learning_rate=cfg.learning_rate,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
            batch_size=cfg.batch_size,
            epochs=cfg.epochs,
            hidden=cfg.hidden,
            seed=s,
        )
        model, report = train_mlp(
            scaler.transform(train.rows),
            train.labels,
            scaler.transform(test.rows),
            test.labels,
            model_cfg,
        )
        log.info("retrain seed %d: train acc %.4f test acc %.4f", s, report.train_accuracy, report.test_accuracy)
        pool.append(MlpClassifier(model, scaler))
    return pool


def select_unfavorable_instances(
    test: Dataset, classifiers: Sequence[Classifier], count: int
) -> tuple[np.ndarray, np.ndarray]:
    """True negatives under every classifier: label 0 and predicted 0 by all."""
    keep = test.labels == 0
    for clf in classifiers:
        keep &= clf.predict_label_batch(test.rows) == 0
    idx = np.nonzero(keep)[0][:count]
    return test.rows[idx], idx


def run_retrain_trial(
    dataset: Dataset,
    *,
    methods: Sequence[str] = KNOWN_METHODS,
    retrain: RetrainSpec = RetrainSpec(),
    train_cfg: TrainConfig = TrainConfig(),
    num_instances: int = 100,
    split_ratio: float = 0.7,
    seed: int = 0,
    models: Sequence[Classifier] | None = None,
    gs_cfg: GrowingSphereConfig = GrowingSphereConfig(),
    pcf_cfg: PlainCfConfig = PlainCfConfig(),
) -> list[TrialRow]:
    """Fixed inputs, varied model: explain each instance under every pair of
    retrained models and score the pairwise set inconsistency.

    Pass `models` to skip training and compare pre-built classifiers
    (e.g. two copies of a deterministic rule classifier).
    """
    train, test = split_train_test(dataset, split_ratio, seed=derive_seed(seed, "split"))
    scaler = Scaler.fit(train.rows)
    if models is None:
        pool: list[Classifier] = list(
            train_model_pool(train, test, scaler, retrain, train_cfg, seed)
        )
    else:
        pool = list(models)
    ctx = MethodContext(
        space=dataset.space,
        scaler=scaler,
        table=PercentileTable.fit(dataset.rows),
        mad=MadScaler.fit(train.rows),
        gs_cfg=gs_cfg,
        pcf_cfg=pcf_cfg,
    )
    instances, ids = select_unfavorable_instances(test, pool, num_instances)

    rows: list[TrialRow] = []
    for trial, (fa, fb) in enumerate(combinations(pool, 2)):
        for x, instance_id in zip(instances, ids):
            # The enumerator's set size fixes k for the single-shot methods.
            base_a = generate_cfes("minsat", x, fa, ctx, k=0, seed=0)
            base_b = generate_cfes("minsat", x, fb, ctx, k=0, seed=0)
            for method in methods:
                if method == "minsat":
                    set_a, set_b = base_a, base_b
                else:
                    seed_a = derive_seed(seed, f"{method}-t{trial}-i{instance_id}-a")
                    seed_b = derive_seed(seed, f"{method}-t{trial}-i{instance_id}-b")
                    try:
                        set_a = generate_cfes(method, x, fa, ctx, k=base_a.k, seed=seed_a)
                        set_b = generate_cfes(method, x, fb, ctx, k=base_b.k, seed=seed_b)
                    except TypeError:
                        rows.append(
                            TrialRow(
                                setting="retrain", sigma=None, trial=trial,
                                instance_id=int(instance_id), method=method, k=0, model_calls=0,
                                inconsistency=None, validity=None, sparsity=None, aps=None,
                                diversity=None, count_diversity=None,
                                missing_reason="unsupported_model",
                            )
                        )
                        continue
                score, reason = _pair_inconsistency(set_a, set_b, scaler)
                quality = _quality(x, set_a, ctx, fa)
                rows.append(
                    TrialRow(
                        setting="retrain", sigma=None, trial=trial,
                        instance_id=int(instance_id), method=method, k=set_a.k,
                        model_calls=set_a.model_calls + set_b.model_calls,
                        inconsistency=score, missing_reason=reason, **quality,
                    )
                )
    return rows


def run_perturbation_trial(
    clf: Classifier,
    instances: np.ndarray,
    ctx: MethodContext,
    *,
    methods: Sequence[str] = KNOWN_METHODS,
    spec: PerturbationSpec = PerturbationSpec(),
) -> list[TrialRow]:
    """Fixed model, perturbed inputs: for each sigma, explain x and
    x + Gaussian noise and score the inconsistency between the two sets."""
    rows: list[TrialRow] = []
    instances = np.asarray(instances, dtype=float)
    base_cache: dict[tuple[str, int], CfeSet] = {}
    for sigma in spec.sigmas:
        for trial in range(spec.trials_per_sigma):
            for instance_id, x in enumerate(instances):
                rng = np.random.default_rng(
                    derive_seed(spec.seed, f"perturb-{sigma}-{trial}-{instance_id}")
                )
                x_prime = x + rng.normal(0.0, sigma, size=x.shape)
                key = ("minsat", instance_id)
                if key not in base_cache:
                    base_cache[key] = generate_cfes("minsat", x, clf, ctx, k=0, seed=0)
                base_a = base_cache[key]
                base_b = generate_cfes("minsat", x_prime, clf, ctx, k=0, seed=0)
                for method in methods:
                    if method == "minsat":
                        set_a, set_b = base_a, base_b
                    else:
                        seed_a = derive_seed(spec.seed, f"{method}-{sigma}-{trial}-{instance_id}-a")
                        seed_b = derive_seed(spec.seed, f"{method}-{sigma}-{trial}-{instance_id}-b")
                        try:
                            set_a = generate_cfes(method, x, clf, ctx, k=base_a.k, seed=seed_a)
                            set_b = generate_cfes(method, x_prime, clf, ctx, k=base_b.k, seed=seed_b)
                        except TypeError:
                            rows.append(
                                TrialRow(
                                    setting="perturb", sigma=sigma, trial=trial,
                                    instance_id=instance_id, method=method, k=0, model_calls=0,
                                    inconsistency=None, validity=None, sparsity=None, aps=None,
                                    diversity=None, count_diversity=None,
                                    missing_reason="unsupported_model",
                                )
                            )
                            continue
                    score, reason = _pair_inconsistency(set_a, set_b, ctx.scaler)
                    quality = _quality(x, set_a, ctx, clf)
                    rows.append(
                        TrialRow(
                            setting="perturb", sigma=sigma, trial=trial,
                            instance_id=instance_id, method=method, k=set_a.k,
                            model_calls=set_a.model_calls + set_b.model_calls,
                            inconsistency=score, missing_reason=reason, **quality,
                        )
                    )
    return rows


CSV_COLUMNS = [
    "schema_version", "setting", "sigma", "trial", "instance_id", "method", "k",
    "model_calls", "inconsistency", "validity", "sparsity", "aps", "diversity",
    "count_diversity", "missing_reason",
]

_METRIC_KEYS = ("inconsistency", "validity", "sparsity", "aps", "diversity", "count_diversity")


def write_rows_csv(rows: Sequence[TrialRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            record = asdict(row)
            writer.writerow(
                [SCHEMA_VERSION]
                + [("" if record[c] is None else record[c]) for c in CSV_COLUMNS[1:]]
            )


def aggregate(rows: Sequence[TrialRow]) -> dict:
    """Group rows by (setting, sigma, method) and average each metric over
    the rows where it is defined, reporting missing counts alongside."""
    groups: dict[tuple, list[TrialRow]] = {}
    for row in rows:
        groups.setdefault((row.setting, row.sigma, row.method), []).append(row)
    summary: dict = {"schema_version": SCHEMA_VERSION, "groups": []}
    for (setting, sigma, method), members in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1] if kv[0][1] is not None else -1.0, kv[0][2])
    ):
        entry: dict = {
            "setting": setting,
            "sigma": sigma,
            "method": method,
            "rows": len(members),
        }
        for key in _METRIC_KEYS:
            values = [getattr(r, key) for r in members if getattr(r, key) is not None]
            entry[f"mean_{key}"] = float(np.mean(values)) if values else None
            entry[f"missing_{key}"] = len(members) - len(values)
        summary["groups"].append(entry)
    return summary


def write_summary_json(summary: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)


def mean_inconsistency(summary: dict, setting: str, method: str, sigma: float | None = None) -> float | None:
    for entry in summary["groups"]:
        if entry["setting"] == setting and entry["method"] == method and entry["sigma"] == sigma:
            return entry["mean_inconsistency"]
    return None
