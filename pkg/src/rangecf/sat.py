"""Append-only CNF store and a self-contained complete DPLL decision procedure.

Variables are dense 0-based integers. The solver branches on variables in a
fixed order, trying False before True, so the first model of an
unconstrained formula is all-False and enumeration probes start from the
smallest admissible mask. No clause learning: workloads here are unit
clauses, implications, and blocking disjunctions over a few dozen
variables, for which plain DPLL with unit propagation is ample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


class SolverBudgetExceeded(Exception):
    """The decision budget ran out before the formula was decided.

    Distinct from UNSAT: the caller must not interpret this as "no model".
    """


@dataclass(frozen=True)
class Literal:
    var: int
    positive: bool = True

    def negate(self) -> "Literal":
        return Literal(self.var, not self.positive)

    @property
    def code(self) -> int:
        # Signed 1-based encoding, used internally and in DIMACS export.
        return self.var + 1 if self.positive else -(self.var + 1)


def pos(var: int) -> Literal:
    return Literal(var, True)


def neg(var: int) -> Literal:
    return Literal(var, False)


@dataclass(frozen=True)
class Clause:
    """Disjunction of literals. Duplicates are collapsed at construction.

    An empty clause is permitted and is unsatisfiable; adding one makes the
    whole formula unsatisfiable.
    """

    literals: tuple[Literal, ...]

    @classmethod
    def of(cls, literals: Iterable[Literal]) -> "Clause":
        seen: dict[int, Literal] = {}
        for lit in literals:
            seen.setdefault(lit.code, lit)
        return cls(literals=tuple(seen.values()))

    def is_tautology(self) -> bool:
        codes = {lit.code for lit in self.literals}
        return any(-c in codes for c in codes)

    def max_var(self) -> int:
        return max((lit.var for lit in self.literals), default=-1)


class CnfFormula:
    """Conjunction of clauses over a fixed variable count.

    The clause set only ever grows, so the model set only ever shrinks;
    enumeration relies on that monotone strengthening.
    """

    def __init__(self, num_vars: int):
        if num_vars < 0:
            raise ValueError("num_vars must be >= 0")
        self.num_vars = num_vars
        self._clauses: list[tuple[int, ...]] = []

    @property
    def clauses(self) -> list[tuple[int, ...]]:
        return list(self._clauses)

    def add_clause(self, clause: Clause | Iterable[Literal]) -> "CnfFormula":
        if not isinstance(clause, Clause):
            clause = Clause.of(clause)
        if clause.max_var() >= self.num_vars:
            raise ValueError(
                f"literal variable {clause.max_var()} out of range for {self.num_vars} variables"
            )
        if clause.is_tautology():
            return self
        self._clauses.append(tuple(lit.code for lit in clause.literals))
        return self

    def satisfies(self, assignment: Sequence[int]) -> bool:
        if len(assignment) != self.num_vars:
            return False
        return all(
            any((c > 0) == bool(assignment[abs(c) - 1]) for c in clause)
            for clause in self._clauses
        )

    def solve(
        self,
        decision_budget: int | None = None,
        branch_order: Sequence[int] | None = None,
    ) -> list[int] | None:
        """Return a satisfying 0/1 assignment, or None iff none exists.

        `branch_order` overrides the default ascending variable order.
        Raises SolverBudgetExceeded when the number of branching decisions
        exceeds `decision_budget`.
        """
        order = list(branch_order) if branch_order is not None else list(range(self.num_vars))
        if sorted(order) != list(range(self.num_vars)):
            raise ValueError("branch_order must be a permutation of all variables")
        state = _SolverState(budget=decision_budget)
        assignment = _dpll([list(c) for c in self._clauses], {}, order, state)
        if assignment is None:
            return None
        model = [int(assignment.get(v, False)) for v in range(self.num_vars)]
        assert self.satisfies(model), "solver returned a non-model"
        return model

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self._clauses)}"]
        for clause in self._clauses:
            lines.append(" ".join(str(c) for c in clause) + " 0")
        return "\n".join(lines) + "\n"


@dataclass
class _SolverState:
    budget: int | None = None
    decisions: int = 0

    def charge(self) -> None:
        self.decisions += 1
        if self.budget is not None and self.decisions > self.budget:
            raise SolverBudgetExceeded(f"decision budget {self.budget} exhausted")


def _assign(clauses: list[list[int]], code: int) -> list[list[int]] | None:
    """Simplify under literal `code` = True; None signals a conflict."""
    out: list[list[int]] = []
    for clause in clauses:
        if code in clause:
            continue
        if -code in clause:
            reduced = [c for c in clause if c != -code]
            if not reduced:
                return None
            out.append(reduced)
        else:
            out.append(clause)
    return out


def _dpll(
    clauses: list[list[int]],
    assignment: dict[int, bool],
    order: list[int],
    state: _SolverState,
) -> dict[int, bool] | None:
    if any(not clause for clause in clauses):
        return None
    # Unit propagation to fixpoint.
    while True:
        unit = next((clause[0] for clause in clauses if len(clause) == 1), None)
        if unit is None:
            break
        assignment[abs(unit) - 1] = unit > 0
        clauses = _assign(clauses, unit)
        if clauses is None:
            return None
    if not clauses:
        return assignment
    var = next(v for v in order if v not in assignment)
    state.charge()
    for value in (False, True):  # prefer False: smallest masks first
        code = var + 1 if value else -(var + 1)
        reduced = _assign(clauses, code)
        if reduced is None:
            continue
        result = _dpll(reduced, {**assignment, var: value}, order, state)
        if result is not None:
            return result
    return None
