"""Shared fixtures: the synthetic walkthrough problem, random monotone
problem generator, and a session-scoped small trained model bundle."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from rangecf.features import (
    Feature,
    FeatureSpace,
    NormalRange,
    Scaler,
    generate_synthetic,
    split_train_test,
    synthetic_feature_space,
)
from rangecf.metrics import MadScaler, PercentileTable
from rangecf.models import (
    MlpClassifier,
    TrainConfig,
    random_monotone_rule,
    synthetic_rule_classifier,
    train_mlp,
)

WALKTHROUGH_X = (0.3, 0.3, -0.5, 0.2)


@pytest.fixture(scope="session")
def synthetic_space():
    return synthetic_feature_space()


@pytest.fixture(scope="session")
def rule():
    return synthetic_rule_classifier()


@pytest.fixture()
def walkthrough_x():
    return np.array(WALKTHROUGH_X)


def make_monotone_problem(rng: np.random.Generator, d0: int):
    """Random instance with d0 abnormal features plus a random monotone DNF
    classifier whose literals can flip under endpoint replacement."""
    lowers = rng.uniform(0.3, 0.9, d0)
    x = lowers - rng.uniform(0.1, 0.5, d0)
    space = FeatureSpace(
        tuple(Feature(f"f{i}", NormalRange(lower=float(lowers[i]))) for i in range(d0))
    )
    clf = random_monotone_rule(d0, rng, reference=x, flip_values=lowers)
    return x, space, clf


@pytest.fixture(scope="session")
def monotone_problem_factory():
    return make_monotone_problem


@pytest.fixture(scope="session")
def small_bundle():
    """Modest-scale trained MLP pipeline for module tests that need a real
    differentiable model; the acceptance suite trains at full scale itself."""
    ds = generate_synthetic(4000, seed=321)
    train, test = split_train_test(ds, 0.7, seed=5)
    scaler = Scaler.fit(train.rows)
    model, report = train_mlp(
        scaler.transform(train.rows),
        train.labels,
        scaler.transform(test.rows),
        test.labels,
        TrainConfig(epochs=25, seed=17),
    )
    clf = MlpClassifier(model, scaler)
    return SimpleNamespace(
        ds=ds,
        train=train,
        test=test,
        scaler=scaler,
        model=model,
        clf=clf,
        report=report,
        table=PercentileTable.fit(ds.rows),
        mad=MadScaler.fit(train.rows),
    )
