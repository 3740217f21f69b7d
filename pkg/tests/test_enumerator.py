import logging

import numpy as np
import pytest

from rangecf.baselines import brute_force_minimal_subsets
from rangecf.enumerator import (
    ConstraintError,
    ConstraintSpec,
    Status,
    compile_constraints,
    enumerate_explanations,
    explanation_set_to_json,
    grow,
    shrink,
)
from rangecf.features import (
    Feature,
    FeatureSpace,
    Mutability,
    NormalRange,
    partition_features,
    replace,
)
from rangecf.metrics import count_diversity
from rangecf.models import RuleClassifier, ThresholdLiteral


def subsets_of(result):
    return sorted(sorted(s) for s in result.subsets())


# --- grow / shrink ----------------------------------------------------------


def test_grow_walkthrough(rule, synthetic_space, walkthrough_x):
    # Starting from {x4}: x1 is rejected (flips), x2 joins, x3 rejected.
    result = grow({3}, walkthrough_x, rule, synthetic_space)
    assert sorted(result.indices) == [1, 3]


def test_grow_fixpoint(rule, synthetic_space, walkthrough_x):
    result = grow({1, 3}, walkthrough_x, rule, synthetic_space)
    assert sorted(result.indices) == [1, 3]


def test_grow_no_eligible_candidates(rule, synthetic_space, walkthrough_x):
    spec = ConstraintSpec(immutable=frozenset({0, 1, 2}))
    result = grow({3}, walkthrough_x, rule, synthetic_space, spec)
    assert sorted(result.indices) == [3]


def test_shrink_walkthrough(rule, synthetic_space, walkthrough_x):
    result = shrink({0, 1, 2, 3}, walkthrough_x, rule, synthetic_space)
    assert sorted(result.indices) == [1, 2]


def test_shrink_already_minimal(rule, synthetic_space, walkthrough_x):
    result = shrink({0}, walkthrough_x, rule, synthetic_space)
    assert sorted(result.indices) == [0]


def test_shrink_empty_on_favorable_input(rule, synthetic_space):
    x = np.array([0.6, 0.0, 0.0, 0.0])  # already label 1
    result = shrink(set(), x, rule, synthetic_space)
    assert result.indices == frozenset()


# --- enumeration ------------------------------------------------------------


def test_enumerate_walkthrough(rule, synthetic_space, walkthrough_x):
    result = enumerate_explanations(walkthrough_x, rule, synthetic_space)
    assert subsets_of(result) == [[0], [1, 2]]
    assert result.status is Status.COMPLETE
    oracle = brute_force_minimal_subsets(walkthrough_x, rule, synthetic_space)
    assert set(result.subsets()) == set(oracle.subsets())


def test_enumerate_favorable_input_yields_empty_subset(rule, synthetic_space):
    x = np.array([0.6, 0.0, 0.0, 0.0])
    result = enumerate_explanations(x, rule, synthetic_space)
    assert subsets_of(result) == [[]]
    assert np.array_equal(result.explanations[0].cfe, x)
    assert result.status is Status.COMPLETE


def test_enumerate_infeasible(synthetic_space):
    # A rule no endpoint replacement can satisfy.
    never = RuleClassifier([[ThresholdLiteral(0, 100.0)]])
    x = np.array([0.3, 0.3, -0.5, 0.2])
    result = enumerate_explanations(x, never, synthetic_space)
    assert result.explanations == ()
    assert result.status is Status.INFEASIBLE
    # Theorem-3 fast path: one full grow, then the blocking clause is empty.
    assert result.model_calls == 1 + 4


def test_enumerate_matches_brute_force_on_random_monotone(monotone_problem_factory):
    rng = np.random.default_rng(77)
    for _ in range(40):
        d0 = int(rng.integers(3, 11))
        x, space, clf = monotone_problem_factory(rng, d0)
        ours = enumerate_explanations(x, clf, space)
        oracle = brute_force_minimal_subsets(x, clf, space)
        assert set(ours.subsets()) == set(oracle.subsets())


def test_enumerate_properties_on_random_suite(monotone_problem_factory):
    rng = np.random.default_rng(1001)
    for _ in range(30):
        d0 = int(rng.integers(3, 10))
        x, space, clf = monotone_problem_factory(rng, d0)
        result = enumerate_explanations(x, clf, space)
        subsets = result.subsets()
        # Antichain: no emitted subset contains another.
        for a in subsets:
            for b in subsets:
                if a is not b:
                    assert not a <= b
        # Validity and CFE consistency.
        for e in result.explanations:
            assert e.probability >= clf.threshold
            assert np.array_equal(e.cfe, replace(x, e.subset.indices, space))
            changed = {i for i in range(space.d) if e.cfe[i] != x[i]}
            assert changed == set(e.subset.indices)
        # Efficiency: memoized probing keeps distinct evaluations under 2^d0.
        assert result.model_calls <= 2**d0
        if result.status is Status.COMPLETE and subsets and subsets != [frozenset()]:
            assert result.model_calls < 2**d0
        # Count-diversity lower bound for multi-explanation results.
        if len(subsets) >= 2:
            assert count_diversity(result.cfes()) >= 2.0 / space.d - 1e-12


def test_enumerate_order_invariance(monotone_problem_factory):
    rng = np.random.default_rng(2024)
    for _ in range(15):
        d0 = int(rng.integers(3, 9))
        x, space, clf = monotone_problem_factory(rng, d0)
        forward = enumerate_explanations(x, clf, space)
        backward = enumerate_explanations(x, clf, space, sat_branch_reversed=True)
        assert set(forward.subsets()) == set(backward.subsets())


def test_enumerate_budget_exceeded(rule, synthetic_space, walkthrough_x):
    result = enumerate_explanations(walkthrough_x, rule, synthetic_space, budget=2)
    assert result.status is Status.BUDGET_EXCEEDED
    assert result.model_calls <= 2


def test_explanation_json_uses_one_based_indices(rule, synthetic_space, walkthrough_x):
    result = enumerate_explanations(walkthrough_x, rule, synthetic_space)
    obj = explanation_set_to_json(result, walkthrough_x)
    assert obj["status"] == "complete"
    assert sorted(e["changed_indices"] for e in obj["explanations"]) == [[1], [2, 3]]
    assert obj["model_calls"] == result.model_calls


# --- constraints ------------------------------------------------------------


def _six_feature_problem():
    space = FeatureSpace(tuple(Feature(f"f{i}", NormalRange(lower=1.0)) for i in range(6)))
    x = np.zeros(6)
    clf = RuleClassifier(
        [
            [ThresholdLiteral(0, 0.5)],
            [ThresholdLiteral(2, 0.5), ThresholdLiteral(3, 0.5)],
            [ThresholdLiteral(4, 0.5), ThresholdLiteral(5, 0.5)],
        ]
    )
    return x, space, clf


def test_immutable_constraint_excludes_feature():
    x, space, clf = _six_feature_problem()
    spec = ConstraintSpec(immutable=frozenset({0}))
    result = enumerate_explanations(x, clf, space, spec)
    assert subsets_of(result) == [[2, 3], [4, 5]]
    assert set(result.subsets()) == set(brute_force_minimal_subsets(x, clf, space, spec).subsets())


def test_causal_edge_clauses():
    x, space, clf = _six_feature_problem()
    partition = partition_features(x, space)
    spec = ConstraintSpec(causal_edges=((0, 1), (0, 2)))
    compiled = compile_constraints(spec, partition, x, space)
    # Parent with two children compiles to two implications.
    rendered = sorted(
        tuple(sorted((lit.var, lit.positive) for lit in c.literals)) for c in compiled.clauses
    )
    assert rendered == [(((0, False)), (1, True)), (((0, False)), (2, True))]
    result = enumerate_explanations(x, clf, space, spec)
    for subset in result.subsets():
        assert compiled.mask_satisfies(subset)
    assert set(result.subsets()) == set(brute_force_minimal_subsets(x, clf, space, spec).subsets())


def test_correlation_pair_moves_together():
    x, space, clf = _six_feature_problem()
    spec = ConstraintSpec(correlation_pairs=((2, 3),))
    result = enumerate_explanations(x, clf, space, spec)
    for subset in result.subsets():
        assert (2 in subset) == (3 in subset)
    assert set(result.subsets()) == set(brute_force_minimal_subsets(x, clf, space, spec).subsets())


def test_exclusive_pair_raw_clauses():
    x, space, clf = _six_feature_problem()
    spec = ConstraintSpec(extra_clauses=(((2, False), (3, False)), ((2, True), (3, True))))
    result = enumerate_explanations(x, clf, space, spec)
    assert result.explanations
    for subset in result.subsets():
        assert len(subset & {2, 3}) == 1
    assert set(result.subsets()) == set(brute_force_minimal_subsets(x, clf, space, spec).subsets())


def test_direction_restricted_feature_compiled_immutable():
    # Feature 0 may only increase but sits above its upper bound, so the
    # endpoint move (downward) is forbidden and it compiles as immutable.
    space = FeatureSpace(
        (
            Feature("down_only_violator", NormalRange(0.0, 1.0), Mutability.INCREASE_ONLY),
            Feature("riser", NormalRange(lower=1.0), Mutability.INCREASE_ONLY),
        )
    )
    x = np.array([2.0, 0.0])
    partition = partition_features(x, space)
    compiled = compile_constraints(ConstraintSpec(), partition, x, space)
    assert compiled.immutable == {0}
    assert compiled.eligible == (1,)


def test_contradictory_raw_clauses_infeasible_without_model_calls():
    x, space, clf = _six_feature_problem()
    spec = ConstraintSpec(extra_clauses=(((0, True),), ((0, False),)))
    result = enumerate_explanations(x, clf, space, spec)
    assert result.status is Status.INFEASIBLE
    assert result.model_calls == 0


def test_constraints_on_normal_features_are_vacuous(caplog):
    x, space, clf = _six_feature_problem()
    x = x.copy()
    x[1] = 1.5  # feature 1 normal
    spec = ConstraintSpec(immutable=frozenset({1}), causal_edges=((1, 2),))
    with caplog.at_level(logging.WARNING, logger="rangecf.enumerator"):
        result = enumerate_explanations(x, clf, space, spec)
    assert "vacuous" in caplog.text or "dropped" in caplog.text
    assert result.explanations


def test_constraint_validation_errors():
    x, space, clf = _six_feature_problem()
    partition = partition_features(x, space)
    with pytest.raises(ConstraintError):
        compile_constraints(ConstraintSpec(immutable=frozenset({99})), partition, x, space)
    with pytest.raises(ConstraintError):
        compile_constraints(
            ConstraintSpec(causal_edges=((0, 1), (1, 0))), partition, x, space
        )
    with pytest.raises(ConstraintError):
        compile_constraints(ConstraintSpec(causal_edges=((0, 0),)), partition, x, space)


def test_constraint_spec_json_round_trip():
    spec = ConstraintSpec(
        immutable=frozenset({4}),
        causal_edges=((0, 1),),
        correlation_pairs=((2, 3),),
        extra_clauses=(((2, False), (3, False)),),
    )
    obj = spec.to_json_obj()
    assert obj["immutable"] == [5]
    assert obj["clauses"] == [[-3, -4]]
    assert ConstraintSpec.from_json_obj(obj) == spec
    with pytest.raises(ConstraintError):
        ConstraintSpec.from_json_obj({"clauses": [[0]]})
    with pytest.raises(ConstraintError):
        ConstraintSpec.from_json_obj({"immutable": [0]})
