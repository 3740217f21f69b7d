import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangecf.features import (
    Dataset,
    EmptyFileError,
    Feature,
    FeatureSpace,
    Mutability,
    NonNumericCellError,
    NormalRange,
    Scaler,
    Subset,
    UnknownColumnError,
    generate_synthetic,
    load_csv,
    load_instances_csv,
    load_schema,
    partition_features,
    replace,
    replacement_target,
    replacement_target_guided,
    save_schema,
    split_train_test,
    synthetic_feature_space,
    synthetic_label,
)


def test_normal_range_validation():
    with pytest.raises(ValueError):
        NormalRange(lower=2.0, upper=1.0)
    with pytest.raises(ValueError):
        NormalRange(lower=float("nan"))
    r = NormalRange(lower=1.0)
    assert r.bounded and r.contains(1.0) and not r.contains(0.999)


def test_feature_space_unique_names():
    with pytest.raises(ValueError):
        FeatureSpace((Feature("a"), Feature("a")))


def test_partition_bmi_example():
    space = FeatureSpace((Feature("bmi", NormalRange(18.5, 24.9)),))
    part = partition_features([40.0], space)
    assert part.abnormal == (0,)
    assert replacement_target([40.0], {0}, space)[0] == 24.9


def test_partition_all_normal(synthetic_space):
    part = partition_features([1.0, 1.0, 1.0, 1.0], synthetic_space)
    assert part.abnormal == ()
    assert part.normal == (0, 1, 2, 3)


def test_partition_walkthrough(synthetic_space, walkthrough_x):
    part = partition_features(walkthrough_x, synthetic_space)
    assert part.abnormal == (0, 1, 2, 3)


def test_partition_boundary_is_normal():
    space = FeatureSpace((Feature("f", NormalRange(0.5, 1.5)),))
    assert partition_features([0.5], space).abnormal == ()
    assert partition_features([1.5], space).abnormal == ()


def test_partition_totality(synthetic_space):
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.standard_normal(4)
        part = partition_features(x, synthetic_space)
        assert sorted(part.abnormal + part.normal) == [0, 1, 2, 3]
        assert set(part.abnormal) & set(part.normal) == set()


def test_replacement_target_examples(synthetic_space, walkthrough_x):
    assert np.array_equal(replacement_target(walkthrough_x, set(), synthetic_space), walkthrough_x)
    # 1-based subset {2,3} is 0-based {1,2}
    out = replacement_target(walkthrough_x, {1, 2}, synthetic_space)
    assert np.allclose(out, [0.3, 0.45, 0.05, 0.2])


def test_replacement_target_keeps_in_range_members(synthetic_space):
    # Selecting a feature that is already inside its range is a no-op; this
    # is what makes replace(replace(x, A), A) == replace(x, A).
    out = replacement_target([1.0, 0.3, 0.3, 0.3], {0}, synthetic_space)
    assert out[0] == 1.0


def test_replacement_target_guided():
    x = np.array([1.0, 2.0])
    guide = np.array([0.0, 9.0])
    assert np.array_equal(replacement_target_guided(x, set(), guide), x)
    assert np.array_equal(replacement_target_guided(x, {0, 1}, guide), guide)
    assert np.array_equal(replacement_target_guided(x, {1}, guide), [1.0, 9.0])
    with pytest.raises(ValueError):
        replacement_target_guided(x, {0}, [1.0, 2.0, 3.0])


def test_replace_examples(synthetic_space, walkthrough_x):
    assert np.array_equal(replace(walkthrough_x, set(), synthetic_space), walkthrough_x)
    out = replace(walkthrough_x, {0}, synthetic_space)
    assert np.allclose(out, [0.55, 0.3, -0.5, 0.2])
    full = replace(walkthrough_x, {0, 1, 2, 3}, synthetic_space)
    assert np.allclose(full, [0.55, 0.45, 0.05, 0.55])


def test_replace_agrees_with_componentwise_form(synthetic_space):
    # Mask algebra vs. the direct componentwise definition on random pairs.
    rng = np.random.default_rng(42)
    for _ in range(1000):
        x = rng.standard_normal(4) * 2.0
        part = partition_features(x, synthetic_space)
        if not part.abnormal:
            continue
        k = int(rng.integers(0, len(part.abnormal) + 1))
        subset = frozenset(rng.choice(part.abnormal, size=k, replace=False).tolist())
        assert np.array_equal(
            replace(x, subset, synthetic_space),
            replacement_target(x, subset, synthetic_space),
        )


@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.sets(st.integers(0, 3)),
    st.sets(st.integers(0, 3)),
)
def test_replace_idempotent_and_monotone(values, picks_a, extra):
    space = synthetic_feature_space()
    x = np.asarray(values)
    abnormal = set(partition_features(x, space).abnormal)
    subset_a = picks_a & abnormal
    subset_b = subset_a | (extra & abnormal)

    once = replace(x, subset_a, space)
    assert np.array_equal(replace(once, subset_a, space), once)

    changed_a = {i for i in range(4) if once[i] != x[i]}
    changed_b = {i for i in range(4) if replace(x, subset_b, space)[i] != x[i]}
    assert changed_a <= changed_b


def test_subset_mask_consistency():
    s = Subset.of(4, {1, 3})
    assert np.array_equal(s.mask, [0, 1, 0, 1])
    assert s.sorted() == [1, 3]
    with pytest.raises(ValueError):
        Subset.of(2, {5})


def test_synthetic_label_rule():
    assert synthetic_label(np.array([0.6, 0.0, 0.0, 0.0])) == 1
    assert synthetic_label(np.array([0.0, 0.5, 0.6, 0.0])) == 1
    assert synthetic_label(np.array([0.0, 0.0, 0.0, 0.0])) == 0


def test_generate_synthetic_deterministic():
    a = generate_synthetic(200, seed=9)
    b = generate_synthetic(200, seed=9)
    assert a.n == 200
    assert np.array_equal(a.rows, b.rows)
    assert np.array_equal(a.labels, b.labels)
    for row, label in zip(a.rows[:50], a.labels[:50]):
        assert label == synthetic_label(row)


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_well_formed(tmp_path, synthetic_space):
    path = _write(tmp_path, "x1,x2,x3,x4,y\n1,2,3,4,1\n0,0,0,0,0\n5,6,7,8,1\n")
    ds = load_csv(path, synthetic_space, "y")
    assert ds.n == 3
    assert ds.labels.tolist() == [1, 0, 1]


def test_load_csv_drops_blank_cells(tmp_path, synthetic_space):
    path = _write(tmp_path, "x1,x2,x3,x4,y\n1,2,3,4,1\n0,,0,0,0\n")
    assert load_csv(path, synthetic_space, "y").n == 1


def test_load_csv_errors(tmp_path, synthetic_space):
    with pytest.raises(UnknownColumnError):
        load_csv(_write(tmp_path, "x1,x2,x3,x4\n1,2,3,4\n"), synthetic_space, "y")
    with pytest.raises(NonNumericCellError):
        load_csv(_write(tmp_path, "x1,x2,x3,x4,y\n1,2,oops,4,1\n", "b.csv"), synthetic_space, "y")
    with pytest.raises(EmptyFileError):
        load_csv(_write(tmp_path, "", "c.csv"), synthetic_space, "y")


def test_load_instances_csv(tmp_path, synthetic_space):
    path = _write(tmp_path, "x1,x2,x3,x4,extra\n1,2,3,4,zzz\n")
    rows = load_instances_csv(path, synthetic_space)
    assert rows.shape == (1, 4)


def test_split_sizes():
    ds = generate_synthetic(10, seed=1)
    train, test = split_train_test(ds, 0.7, seed=2)
    assert (train.n, test.n) == (7, 3)


def test_split_full_scale_sizes():
    ds = generate_synthetic(20000, seed=1)
    train, test = split_train_test(ds, 0.7, seed=2)
    assert (train.n, test.n) == (14000, 6000)


def test_split_deterministic_and_ratio_guard():
    ds = generate_synthetic(50, seed=3)
    a = split_train_test(ds, 0.7, seed=4)
    b = split_train_test(ds, 0.7, seed=4)
    assert np.array_equal(a[0].rows, b[0].rows)
    with pytest.raises(ValueError):
        split_train_test(ds, 1.0, seed=4)


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 10_000))
def test_scaler_round_trip(seed):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((30, 3)) * rng.uniform(0.5, 4.0, 3)
    scaler = Scaler.fit(rows)
    x = rng.standard_normal(3)
    assert np.all(np.abs(scaler.inverse_transform(scaler.transform(x)) - x) < 1e-9)


def test_scaler_zero_variance_passthrough():
    rows = np.column_stack([np.full(10, 7.0), np.arange(10.0)])
    scaler = Scaler.fit(rows)
    assert scaler.scale[0] == 1.0
    z = scaler.transform(np.array([7.0, 0.0]))
    assert z[0] == 0.0


def test_schema_json_round_trip(tmp_path):
    space = FeatureSpace(
        (
            Feature("age", NormalRange(0, 120), Mutability.IMMUTABLE),
            Feature("score", NormalRange(lower=3.5), Mutability.INCREASE_ONLY),
            Feature("free", NormalRange(), Mutability.FREE),
        )
    )
    path = tmp_path / "schema.json"
    save_schema(space, path, label_column="y")
    loaded, label = load_schema(path)
    assert label == "y"
    assert loaded == space
    # bare-array form
    path2 = tmp_path / "schema2.json"
    path2.write_text(json.dumps(space.to_json_obj()))
    loaded2, label2 = load_schema(path2)
    assert label2 is None
    assert loaded2 == space
    assert loaded2.features[1].range.upper == math.inf


def test_dataset_validation(synthetic_space):
    with pytest.raises(ValueError):
        Dataset(rows=np.zeros((3, 4)), labels=np.zeros(2), space=synthetic_space)
    with pytest.raises(ValueError):
        Dataset(rows=np.zeros((3, 5)), labels=np.zeros(3), space=synthetic_space)
