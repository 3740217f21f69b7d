"""Counterfactual explanations by replacing minimal sets of out-of-range
features with the nearest endpoints of their normal ranges."""

from .baselines import (
    GrowingSphereConfig,
    PlainCfConfig,
    brute_force_minimal_subsets,
    growing_sphere,
    plain_cf,
)
from .enumerator import (
    ConstraintSpec,
    Explanation,
    ExplanationSet,
    Status,
    compile_constraints,
    enumerate_explanations,
    grow,
    shrink,
)
from .features import (
    Dataset,
    Feature,
    FeaturePartition,
    FeatureSpace,
    Mutability,
    NormalRange,
    Scaler,
    Subset,
    generate_synthetic,
    load_csv,
    partition_features,
    replace,
    replacement_target,
    replacement_target_guided,
    split_train_test,
    synthetic_feature_space,
)
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
from .models import (
    Classifier,
    MlpClassifier,
    MlpModel,
    RuleClassifier,
    ThresholdLiteral,
    TrainConfig,
    load_model,
    save_model,
    synthetic_rule_classifier,
    train_mlp,
)
from .sat import Clause, CnfFormula, Literal, SolverBudgetExceeded, neg, pos

__version__ = "0.1.0"
