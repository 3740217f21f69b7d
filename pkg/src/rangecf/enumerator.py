"""Enumeration of all minimal abnormal-feature subsets whose endpoint
replacement flips the prediction.

The search runs over mask variables (one per abnormal feature): a SAT call
proposes an unexplored mask; if its replacement fails to flip, the mask is
grown to a maximal failing set and every subset of that set is blocked;
if it flips, the mask is shrunk to a minimal flipping set, emitted, and
every superset is blocked. The loop ends when the formula becomes
unsatisfiable. User constraints (frozen features, causal edges,
correlations, raw clauses) compile into the same formula, and grow/shrink
apply a closure step so every probed mask keeps satisfying them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .features import (
    FeaturePartition,
    FeatureSpace,
    Mutability,
    Subset,
    as_instance,
    partition_features,
    replace,
)
from .models import Classifier
from .sat import Clause, CnfFormula, Literal, neg, pos

log = logging.getLogger(__name__)

DEFAULT_MODEL_CALL_BUDGET = 1_000_000


class ConstraintError(ValueError):
    """Invalid constraint specification (bad indices, cyclic causal edges)."""


class Status(str, Enum):
    COMPLETE = "complete"
    INFEASIBLE = "infeasible"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class ConstraintSpec:
    """User-supplied restrictions on which masks are admissible.

    All indices are 0-based feature indices. `extra_clauses` is a raw escape
    hatch: each clause is a disjunction of (feature, polarity) pairs over the
    mask bits. The JSON form uses 1-based indices and signed integers for
    clause literals (negative = negated).
    """

    immutable: frozenset[int] = frozenset()
    causal_edges: tuple[tuple[int, int], ...] = ()
    correlation_pairs: tuple[tuple[int, int], ...] = ()
    extra_clauses: tuple[tuple[tuple[int, bool], ...], ...] = ()

    def is_empty(self) -> bool:
        return not (self.immutable or self.causal_edges or self.correlation_pairs or self.extra_clauses)

    def to_json_obj(self) -> dict:
        return {
            "immutable": sorted(i + 1 for i in self.immutable),
            "causal_edges": [[p + 1, c + 1] for p, c in self.causal_edges],
            "correlation_pairs": [[a + 1, b + 1] for a, b in self.correlation_pairs],
            "clauses": [
                [(i + 1) if positive else -(i + 1) for i, positive in clause]
                for clause in self.extra_clauses
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ConstraintSpec":
        def to_zero_based(v: int) -> int:
            v = int(v)
            if v < 1:
                raise ConstraintError(f"feature indices are 1-based in files, got {v}")
            return v - 1

        clauses = []
        for raw in obj.get("clauses", []):
            lits = []
            for code in raw:
                code = int(code)
                if code == 0:
                    raise ConstraintError("0 is not a valid signed literal")
                lits.append((abs(code) - 1, code > 0))
            clauses.append(tuple(lits))
        return cls(
            immutable=frozenset(to_zero_based(i) for i in obj.get("immutable", [])),
            causal_edges=tuple((to_zero_based(p), to_zero_based(c)) for p, c in obj.get("causal_edges", [])),
            correlation_pairs=tuple(
                (to_zero_based(a), to_zero_based(b)) for a, b in obj.get("correlation_pairs", [])
            ),
            extra_clauses=tuple(clauses),
        )


def load_constraints(path: str) -> ConstraintSpec:
    with open(path) as fh:
        return ConstraintSpec.from_json_obj(json.load(fh))


@dataclass(frozen=True)
class CompiledConstraints:
    """Constraint clauses over mask variables plus the closure tables that
    grow/shrink use to keep probes admissible.

    Variables exist only for abnormal features; normal features cannot change
    by construction, so no per-feature prohibition clauses are needed.
    """

    feature_of: tuple[int, ...]  # variable -> feature index
    var_of: dict[int, int]  # feature index -> variable
    clauses: tuple[Clause, ...]
    immutable: frozenset[int]  # features (includes direction-violating ones)
    add_adjacent: dict[int, frozenset[int]]  # feature -> must co-enter
    remove_adjacent: dict[int, frozenset[int]]  # feature -> must co-leave
    unsatisfiable: bool = False

    @property
    def num_vars(self) -> int:
        return len(self.feature_of)

    @property
    def eligible(self) -> tuple[int, ...]:
        return tuple(i for i in self.feature_of if i not in self.immutable)

    def mask_satisfies(self, subset: frozenset[int]) -> bool:
        """Replay the compiled clauses against a feature subset."""
        if self.unsatisfiable:
            return False
        for clause in self.clauses:
            if not any(
                (self.feature_of[lit.var] in subset) == lit.positive for lit in clause.literals
            ):
                return False
        return True

    def close_add(self, current: set[int], candidate: int) -> frozenset[int] | None:
        """Smallest admissible superset of `current` containing `candidate`,
        or None when no such closure exists."""
        if candidate in self.immutable:
            return None
        pending = [candidate]
        added: set[int] = set()
        while pending:
            i = pending.pop()
            if i in current or i in added:
                continue
            if i in self.immutable or i not in self.var_of:
                return None
            added.add(i)
            pending.extend(self.add_adjacent.get(i, ()))
        closed = frozenset(current | added)
        return closed if self.mask_satisfies(closed) else None

    def close_remove(self, current: set[int], candidate: int) -> frozenset[int] | None:
        """Largest admissible subset of `current` excluding `candidate`,
        or None when no such closure exists."""
        pending = [candidate]
        removed: set[int] = set()
        while pending:
            i = pending.pop()
            if i not in current or i in removed:
                continue
            removed.add(i)
            pending.extend(j for j in self.remove_adjacent.get(i, ()) if j in current)
        closed = frozenset(current - removed)
        return closed if self.mask_satisfies(closed) else None


def _check_acyclic(edges: Sequence[tuple[int, int]]) -> None:
    children: dict[int, list[int]] = {}
    for p, c in edges:
        children.setdefault(p, []).append(c)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[int, int] = {}

    def visit(node: int) -> None:
        color[node] = GRAY
        for nxt in children.get(node, ()):
            state = color.get(nxt, WHITE)
            if state == GRAY:
                raise ConstraintError(f"causal edges contain a cycle through feature {nxt + 1}")
            if state == WHITE:
                visit(nxt)
        color[node] = BLACK

    for node in list(children):
        if color.get(node, WHITE) == WHITE:
            visit(node)


def compile_constraints(
    spec: ConstraintSpec,
    partition: FeaturePartition,
    x: np.ndarray,
    space: FeatureSpace,
) -> CompiledConstraints:
    """Translate a constraint spec into mask-variable clauses and closure
    tables for one instance.

    Needs the instance and the feature space on top of the partition: the
    direction a feature moves under replacement (up to the lower endpoint or
    down to the upper) decides whether a one-direction-only feature must be
    frozen.
    """
    d = space.d
    for idx in spec.immutable:
        if not 0 <= idx < d:
            raise ConstraintError(f"immutable index {idx} out of range")
    for p, c in spec.causal_edges:
        if not (0 <= p < d and 0 <= c < d):
            raise ConstraintError(f"causal edge ({p}, {c}) out of range")
        if p == c:
            raise ConstraintError(f"causal self-loop on feature {p + 1}")
    for a, b in spec.correlation_pairs:
        if not (0 <= a < d and 0 <= b < d) or a == b:
            raise ConstraintError(f"bad correlation pair ({a}, {b})")
    for clause in spec.extra_clauses:
        for i, _ in clause:
            if not 0 <= i < d:
                raise ConstraintError(f"clause literal index {i} out of range")
    _check_acyclic(spec.causal_edges)

    abnormal = partition.abnormal
    abnormal_set = set(abnormal)
    var_of = {feat: v for v, feat in enumerate(abnormal)}

    immutable: set[int] = set()
    for i in abnormal:
        feat = space.features[i]
        if feat.mutability is Mutability.IMMUTABLE or i in spec.immutable:
            immutable.add(i)
            continue
        moves_up = x[i] < feat.range.lower
        if feat.mutability is Mutability.INCREASE_ONLY and not moves_up:
            immutable.add(i)  # endpoint move would decrease the value
        elif feat.mutability is Mutability.DECREASE_ONLY and moves_up:
            immutable.add(i)
    for i in spec.immutable:
        if i not in abnormal_set:
            log.warning("immutable constraint on normal feature %d is vacuous; dropped", i + 1)

    clauses: list[Clause] = [Clause.of([neg(var_of[i])]) for i in sorted(immutable)]

    add_adjacent: dict[int, set[int]] = {}
    remove_adjacent: dict[int, set[int]] = {}

    def link(parent: int, child: int) -> None:
        # Clause (parent in mask -> child in mask); closure mirrors it.
        clauses.append(Clause.of([neg(var_of[parent]), pos(var_of[child])]))
        add_adjacent.setdefault(parent, set()).add(child)
        remove_adjacent.setdefault(child, set()).add(parent)

    for p, c in spec.causal_edges:
        if p in abnormal_set and c in abnormal_set:
            link(p, c)
        else:
            log.warning("causal edge (%d -> %d) touches a normal feature; dropped", p + 1, c + 1)
    for a, b in spec.correlation_pairs:
        if a in abnormal_set and b in abnormal_set:
            link(a, b)
            link(b, a)
        else:
            log.warning("correlation pair (%d, %d) touches a normal feature; dropped", a + 1, b + 1)

    unsatisfiable = False
    for raw in spec.extra_clauses:
        lits: list[Literal] = []
        satisfied = False
        for i, positive in raw:
            if i in abnormal_set:
                lits.append(Literal(var_of[i], positive))
            elif positive:
                log.warning("positive literal on normal feature %d dropped from clause", i + 1)
            else:
                satisfied = True  # normal feature never enters the mask
                log.warning("clause satisfied by normal feature %d; dropped", i + 1)
                break
        if satisfied:
            continue
        if not lits:
            unsatisfiable = True
            continue
        clauses.append(Clause.of(lits))

    return CompiledConstraints(
        feature_of=abnormal,
        var_of=var_of,
        clauses=tuple(clauses),
        immutable=frozenset(immutable),
        add_adjacent={k: frozenset(v) for k, v in add_adjacent.items()},
        remove_adjacent={k: frozenset(v) for k, v in remove_adjacent.items()},
        unsatisfiable=unsatisfiable,
    )


@dataclass(frozen=True)
class Explanation:
    """One minimal subset with its realized counterfactual vector."""

    subset: Subset
    cfe: np.ndarray
    probability: float


@dataclass(frozen=True)
class ExplanationSet:
    explanations: tuple[Explanation, ...]
    model_calls: int
    pruned_subset_clauses: int
    pruned_superset_clauses: int
    status: Status

    def subsets(self) -> list[frozenset[int]]:
        return [e.subset.indices for e in self.explanations]

    def cfes(self) -> np.ndarray:
        if not self.explanations:
            return np.empty((0, 0))
        return np.stack([e.cfe for e in self.explanations])

    def __len__(self) -> int:
        return len(self.explanations)


class BudgetExhausted(Exception):
    pass


class _ProbeCache:
    """Memoized replacement probes. A mask evaluated once never costs a
    second classifier call, so `calls` counts distinct mask evaluations."""

    def __init__(self, f: Classifier, x: np.ndarray, space: FeatureSpace, budget: int | None):
        self.f = f
        self.x = x
        self.space = space
        self.budget = budget
        self.calls = 0
        self._memo: dict[frozenset[int], float] = {}

    def probability(self, subset: frozenset[int]) -> float:
        hit = self._memo.get(subset)
        if hit is not None:
            return hit
        if self.budget is not None and self.calls >= self.budget:
            raise BudgetExhausted
        value = float(self.f.predict_proba(replace(self.x, subset, self.space)))
        self.calls += 1
        self._memo[subset] = value
        return value

    def flips(self, subset: frozenset[int]) -> bool:
        return self.probability(subset) >= self.f.threshold


def _grow(A: frozenset[int], cache: _ProbeCache, compiled: CompiledConstraints) -> frozenset[int]:
    """Extend a non-flipping subset until adding any further admissible
    feature (with its closure) would flip the prediction."""
    current = set(A)
    for i in sorted(compiled.eligible):
        if i in current:
            continue
        closed = compiled.close_add(current, i)
        if closed is None:
            continue
        if not cache.flips(closed):
            current = set(closed)
    return frozenset(current)


def _shrink(A: frozenset[int], cache: _ProbeCache, compiled: CompiledConstraints) -> frozenset[int]:
    """Drop members of a flipping subset (with closure) while the prediction
    stays flipped."""
    current = set(A)
    for i in sorted(A):
        if i not in current:
            continue
        closed = compiled.close_remove(current, i)
        if closed is None:
            continue
        if cache.flips(closed):
            current = set(closed)
    return frozenset(current)


def _resolve(
    x: Iterable[float],
    f: Classifier,
    space: FeatureSpace,
    constraints: ConstraintSpec | CompiledConstraints | None,
) -> tuple[np.ndarray, CompiledConstraints]:
    arr = as_instance(x, space.d)
    if isinstance(constraints, CompiledConstraints):
        return arr, constraints
    partition = partition_features(arr, space)
    return arr, compile_constraints(constraints or ConstraintSpec(), partition, arr, space)


def grow(
    A: Subset | Iterable[int],
    x: Iterable[float],
    f: Classifier,
    space: FeatureSpace,
    constraints: ConstraintSpec | CompiledConstraints | None = None,
) -> Subset:
    """Maximal non-flipping superset of A (assumes replacing A does not flip)."""
    arr, compiled = _resolve(x, f, space, constraints)
    cache = _ProbeCache(f, arr, space, budget=None)
    indices = A.indices if isinstance(A, Subset) else frozenset(A)
    return Subset.of(space.d, _grow(indices, cache, compiled))


def shrink(
    A: Subset | Iterable[int],
    x: Iterable[float],
    f: Classifier,
    space: FeatureSpace,
    constraints: ConstraintSpec | CompiledConstraints | None = None,
) -> Subset:
    """Minimal flipping subset of A (assumes replacing A flips)."""
    arr, compiled = _resolve(x, f, space, constraints)
    cache = _ProbeCache(f, arr, space, budget=None)
    indices = A.indices if isinstance(A, Subset) else frozenset(A)
    return Subset.of(space.d, _shrink(indices, cache, compiled))


def enumerate_explanations(
    x: Iterable[float],
    f: Classifier,
    space: FeatureSpace,
    constraints: ConstraintSpec | None = None,
    *,
    budget: int | None = DEFAULT_MODEL_CALL_BUDGET,
    sat_decision_budget: int | None = None,
    sat_branch_reversed: bool = False,
) -> ExplanationSet:
    """Enumerate every admissible minimal subset whose replacement flips the
    prediction to the favorable class.

    Completeness holds when the replacement response is monotone (replacing
    more abnormal features never lowers the favorable probability); for
    other classifiers the walk still terminates and every emitted subset is
    a valid counterfactual, but no completeness is claimed. An instance that
    already has the favorable label yields the single empty subset.
    """
    arr = as_instance(x, space.d)
    partition = partition_features(arr, space)
    compiled: CompiledConstraints
    if constraints is None:
        constraints = ConstraintSpec()
    compiled = compile_constraints(constraints, partition, arr, space)

    cnf = CnfFormula(compiled.num_vars)
    if compiled.unsatisfiable:
        cnf.add_clause(Clause.of([]))
    for clause in compiled.clauses:
        cnf.add_clause(clause)

    cache = _ProbeCache(f, arr, space, budget)
    abnormal_set = set(compiled.feature_of)
    branch_order = list(reversed(range(compiled.num_vars))) if sat_branch_reversed else None

    found: list[Explanation] = []
    pruned_sub = pruned_super = 0
    status = Status.COMPLETE
    try:
        while True:
            model = cnf.solve(decision_budget=sat_decision_budget, branch_order=branch_order)
            if model is None:
                break
            A = frozenset(compiled.feature_of[v] for v, bit in enumerate(model) if bit)
            if cache.flips(A):
                a_star = _shrink(A, cache, compiled)
                found.append(
                    Explanation(
                        subset=Subset.of(space.d, a_star),
                        cfe=replace(arr, a_star, space),
                        probability=cache.probability(a_star),
                    )
                )
                # Block every superset of the minimal flipping set.
                cnf.add_clause(Clause.of([neg(compiled.var_of[i]) for i in sorted(a_star)]))
                pruned_super += 1
            else:
                a_hat = _grow(A, cache, compiled)
                # Block every subset of the maximal non-flipping set.
                rest = sorted(abnormal_set - a_hat)
                cnf.add_clause(Clause.of([pos(compiled.var_of[i]) for i in rest]))
                pruned_sub += 1
    except BudgetExhausted:
        status = Status.BUDGET_EXCEEDED
    if status is Status.COMPLETE and not found:
        status = Status.INFEASIBLE
    return ExplanationSet(
        explanations=tuple(found),
        model_calls=cache.calls,
        pruned_subset_clauses=pruned_sub,
        pruned_superset_clauses=pruned_super,
        status=status,
    )


def explanation_set_to_json(
    result: ExplanationSet, x: Iterable[float], method: str = "minsat"
) -> dict:
    """External JSON form; feature indices are reported 1-based."""
    return {
        "method": method,
        "input": [float(v) for v in np.asarray(x, dtype=float)],
        "status": result.status.value,
        "model_calls": result.model_calls,
        "pruned_subset_clauses": result.pruned_subset_clauses,
        "pruned_superset_clauses": result.pruned_superset_clauses,
        "explanations": [
            {
                "changed_indices": [i + 1 for i in e.subset.sorted()],
                "cfe": [float(v) for v in e.cfe],
                "probability": e.probability,
            }
            for e in result.explanations
        ],
    }
