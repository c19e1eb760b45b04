"""Finite-state incomplete-information games over priorities or preferences.

Two shapes of uncertainty are modeled: a common lottery over priority
profiles (every student shares the same beliefs and utilities), and a single
student with privately known type whose strategy is type-contingent. All
probabilities and utilities are exact rationals; equilibrium verdicts never
touch floating point.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .core import (
    GuardExceeded,
    Matching,
    Preference,
    Problem,
    ProblemValidationError,
    TierStructure,
)
from .game import DEFAULT_PROFILE_GUARD, strategy_space
from .mechanisms import apply_mechanism

UtilityTable = Mapping[Optional[str], Fraction]
BayesProfile = Mapping[str, Union[Preference, tuple[Preference, ...]]]


@dataclass(frozen=True)
class BayesState:
    """One realization: its probability, priority overrides (if any), and the
    per-student utility tables in force at that state."""

    probability: Fraction
    priorities: Optional[Mapping[str, tuple[str, ...]]]
    utilities: Mapping[str, UtilityTable]


@dataclass(frozen=True)
class BayesianProblem:
    students: tuple[str, ...]
    schools: tuple[str, ...]
    quotas: Mapping[str, int]
    tiers: TierStructure
    base_priorities: Optional[Mapping[str, tuple[str, ...]]]
    states: tuple[BayesState, ...]
    typed_student: Optional[str] = None

    def state_priorities(self, state: int) -> dict[str, tuple[str, ...]]:
        merged = dict(self.base_priorities or {})
        merged.update(self.states[state].priorities or {})
        missing = [s for s in self.schools if s not in merged]
        if missing:
            raise ValueError(f"no priority order for schools {missing} in state {state}")
        return merged

    def preference_of(self, student: str, state: int = 0) -> Preference:
        """Ordinal preference induced by the student's utility table at a state."""
        table = self.states[state].utilities[student]
        ranked = sorted(self.schools, key=lambda s: table[s], reverse=True)
        acceptable = tuple(s for s in ranked if table[s] > table[None])
        unacceptable = tuple(s for s in ranked if table[s] < table[None])
        return Preference(acceptable, unacceptable)

    def truthful_profile(self) -> dict:
        profile: dict = {}
        for i in self.students:
            if i == self.typed_student:
                profile[i] = tuple(
                    self.preference_of(i, k) for k in range(len(self.states))
                )
            else:
                profile[i] = self.preference_of(i, 0)
        return profile

    def state_problem(self, state: int) -> Problem:
        """Complete-information problem realized at one state (truthful preferences)."""
        return Problem(
            self.students,
            self.schools,
            dict(self.quotas),
            self.state_priorities(state),
            self.tiers,
            {i: self.preference_of(i, state) for i in self.students},
        )

    def reports_at(self, profile: BayesProfile, state: int) -> dict[str, Preference]:
        return {
            i: (profile[i][state] if i == self.typed_student else profile[i])
            for i in self.students
        }

    def outcome(self, profile: BayesProfile, state: int, mechanism: str = "tda") -> Matching:
        return apply_mechanism(
            self.state_problem(state), mechanism, self.reports_at(profile, state), self.tiers
        )


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise ProblemValidationError([f"rational expected, got {value!r} (floats are not accepted)"])


def validate_bayesian_problem(raw: Mapping) -> BayesianProblem:
    """Build a BayesianProblem from scenario data in either uncertainty shape."""
    issues: list[str] = []
    students = tuple(raw.get("students", ()))
    schools = tuple(raw.get("schools", ()))
    quotas = dict(raw.get("quotas", {}))
    tiers = TierStructure(dict(raw.get("tiers", {})))
    issues.extend(tiers.issues(schools))
    base_priorities = None
    if raw.get("priorities"):
        base_priorities = {s: tuple(v) for s, v in raw["priorities"].items()}

    def utility_table(entry: Mapping) -> dict[Optional[str], Fraction]:
        return {None if key == "self" else key: _as_fraction(value) for key, value in entry.items()}

    shared = {i: utility_table(entry) for i, entry in raw.get("utilities", {}).items()}

    has_states = bool(raw.get("states"))
    has_types = bool(raw.get("private_types"))
    if has_states == has_types:
        issues.append("exactly one of 'states' (priority lottery) or 'private_types' is required")
        raise ProblemValidationError(issues)

    states = []
    typed_student = None
    if has_states:
        for entry in raw["states"]:
            overrides = (
                {s: tuple(v) for s, v in entry["priorities"].items()}
                if entry.get("priorities")
                else None
            )
            states.append(BayesState(_as_fraction(entry["prob"]), overrides, shared))
    else:
        private = raw["private_types"]
        typed_student = private["student"]
        if typed_student not in students:
            issues.append(f"typed student {typed_student} is not a student")
        for entry in private["types"]:
            tables = dict(shared)
            tables[typed_student] = utility_table(entry["utilities"])
            states.append(BayesState(_as_fraction(entry["prob"]), None, tables))

    total = sum((st.probability for st in states), Fraction(0))
    if total != 1:
        issues.append(f"state probabilities sum to {total}, not 1")
    for k, st in enumerate(states):
        if not 0 < st.probability <= 1:
            issues.append(f"state {k} probability {st.probability} outside (0, 1]")
        for i in students:
            table = st.utilities.get(i, {})
            missing = [s for s in schools if s not in table] + ([] if None in table else ["self"])
            if missing:
                issues.append(f"utilities missing for student {i} in state {k}: {missing}")
                continue
            values = list(table.values())
            if len(set(values)) != len(values):
                issues.append(f"utility table for student {i} in state {k} has ties")
    if issues:
        raise ProblemValidationError(issues)

    problem = BayesianProblem(
        students, schools, quotas, tiers, base_priorities, tuple(states), typed_student
    )
    for k in range(len(states)):
        problem.state_priorities(k)
    return problem


def parse_bayesian_problem(source: Union[str, Path]) -> BayesianProblem:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
    return validate_bayesian_problem(json.loads(text))


def expected_utility(
    problem: BayesianProblem,
    profile: BayesProfile,
    student: str,
    mechanism: str = "tda",
) -> Fraction:
    """Probability-weighted utility of the student's assignment across states."""
    total = Fraction(0)
    for k, state in enumerate(problem.states):
        assigned = problem.outcome(profile, k, mechanism)[student]
        total += state.probability * state.utilities[student][assigned]
    return total


def is_bayes_nash(
    problem: BayesianProblem, mechanism: str, profile: BayesProfile
) -> bool:
    """No student (and no type of the privately informed student) can raise
    expected utility with a canonical deviation."""
    strategies = strategy_space(problem.schools)
    for i in problem.students:
        if i == problem.typed_student:
            for theta in range(len(problem.states)):
                table = problem.states[theta].utilities[i]
                current = table[problem.outcome(profile, theta, mechanism)[i]]
                for alt in strategies:
                    reports = tuple(
                        alt if k == theta else profile[i][k]
                        for k in range(len(problem.states))
                    )
                    value = table[
                        problem.outcome({**profile, i: reports}, theta, mechanism)[i]
                    ]
                    if value > current:
                        return False
        else:
            current = expected_utility(problem, profile, i, mechanism)
            for alt in strategies:
                if expected_utility(problem, {**profile, i: alt}, i, mechanism) > current:
                    return False
    return True


# ---------------------------------------------------------------------------
# Exhaustive equilibrium enumeration


class _BayesGrid:
    """Array engine over the product of strategy axes.

    Untyped students contribute one axis each; the typed student contributes
    one axis per type. Each state's outcomes only depend on its relevant axes
    and are broadcast across the rest. Utilities are integer-rescaled exactly.
    """

    def __init__(self, problem: BayesianProblem, mechanism: str, max_profiles: int):
        self.problem = problem
        self.mechanism = mechanism
        self.strategies = strategy_space(problem.schools)
        self.sigma = len(self.strategies)
        self.axes: list[tuple[str, Optional[int]]] = []
        for i in problem.students:
            if i == problem.typed_student:
                for theta in range(len(problem.states)):
                    self.axes.append((i, theta))
            else:
                self.axes.append((i, None))
        self.grid_shape = (self.sigma,) * len(self.axes)
        if self.sigma ** len(self.axes) > max_profiles:
            raise GuardExceeded(
                f"{self.sigma ** len(self.axes)} type-contingent profiles exceed "
                f"the guard {max_profiles}"
            )
        self.m = len(problem.schools)
        self.n = len(problem.students)
        self.state_axes = [
            [
                k
                for k, (student, theta) in enumerate(self.axes)
                if theta is None or theta == s
            ]
            for s in range(len(problem.states))
        ]
        self.state_codes = [self._build_state(s) for s in range(len(problem.states))]
        self.weights, self.utilities = self._scaled_utilities()

    def _build_state(self, state: int) -> np.ndarray:
        """Outcome codes over the state's relevant axes, shape (sigma^r, n)."""
        problem = self.problem
        axes = self.state_axes[state]
        relevant = [self.axes[k][0] for k in axes]
        base = problem.state_problem(state)
        school_idx = {s: k for k, s in enumerate(problem.schools)}
        codes = np.empty((self.sigma ** len(axes), self.n), dtype=np.int16)
        for p, combo in enumerate(itertools.product(range(self.sigma), repeat=len(axes))):
            reports = {
                student: self.strategies[digit] for student, digit in zip(relevant, combo)
            }
            outcome = apply_mechanism(base, self.mechanism, reports, problem.tiers)
            for k, i in enumerate(problem.students):
                assigned = outcome[i]
                codes[p, k] = self.m if assigned is None else school_idx[assigned]
        return codes

    def _scaled_utilities(self):
        """Integer state weights and per-(state, student) utility vectors whose
        scaled expected values order exactly like the rational ones."""
        problem = self.problem
        denom = math.lcm(*(st.probability.denominator for st in problem.states))
        weights = [int(st.probability * denom) for st in problem.states]
        utilities = []
        for s, st in enumerate(problem.states):
            per_student = []
            for i in problem.students:
                table = st.utilities[i]
                scale = math.lcm(
                    *(
                        st2.utilities[i][key].denominator
                        for st2 in problem.states
                        for key in list(problem.schools) + [None]
                    )
                )
                per_student.append(
                    np.array(
                        [int(table[s2] * scale) for s2 in problem.schools]
                        + [int(table[None] * scale)],
                        dtype=np.int64,
                    )
                )
            utilities.append(per_student)
        return weights, utilities

    def _broadcast(self, state: int, values: np.ndarray) -> np.ndarray:
        """Reshape a state-table vector (len sigma^r) onto the full grid."""
        axes = self.state_axes[state]
        shape = [1] * len(self.axes)
        for k in axes:
            shape[k] = self.sigma
        return values.reshape(shape)

    def student_index(self, student: str) -> int:
        return self.problem.students.index(student)

    def expected_scaled(self, student: str) -> np.ndarray:
        """Scaled expected utility of an untyped student over the full grid."""
        k = self.student_index(student)
        total = np.zeros(self.grid_shape, dtype=np.int64)
        for s in range(len(self.problem.states)):
            vals = self.utilities[s][k][self.state_codes[s][:, k]]
            total = total + self.weights[s] * self._broadcast(s, vals)
        return total

    def interim_scaled(self, theta: int) -> np.ndarray:
        """Scaled state-theta utility of the typed student over the full grid."""
        k = self.student_index(self.problem.typed_student)
        vals = self.utilities[theta][k][self.state_codes[theta][:, k]]
        return np.broadcast_to(self._broadcast(theta, vals), self.grid_shape)

    def bne_mask(self) -> np.ndarray:
        mask = np.ones(self.grid_shape, dtype=bool)
        for axis, (student, theta) in enumerate(self.axes):
            if theta is None:
                payoff = self.expected_scaled(student)
            else:
                payoff = self.interim_scaled(theta)
            mask &= payoff == payoff.max(axis=axis, keepdims=True)
        return mask

    def outcome_tuple(self, flat_index: int) -> tuple[Matching, ...]:
        digits = np.unravel_index(flat_index, self.grid_shape)
        schools = self.problem.schools
        out = []
        for s in range(len(self.problem.states)):
            axes = self.state_axes[s]
            idx = 0
            for k in axes:
                idx = idx * self.sigma + int(digits[k])
            row = self.state_codes[s][idx]
            out.append(
                Matching(
                    {
                        i: (schools[int(c)] if int(c) < self.m else None)
                        for i, c in zip(self.problem.students, row)
                    }
                )
            )
        return tuple(out)

    def profile_at(self, flat_index: int) -> dict:
        digits = np.unravel_index(flat_index, self.grid_shape)
        profile: dict = {}
        for i in self.problem.students:
            if i == self.problem.typed_student:
                profile[i] = tuple(
                    self.strategies[int(digits[k])]
                    for k, (student, theta) in enumerate(self.axes)
                    if student == i
                )
            else:
                axis = next(
                    k for k, (student, theta) in enumerate(self.axes) if student == i
                )
                profile[i] = self.strategies[int(digits[axis])]
        return profile


@dataclass(frozen=True)
class BneReport:
    mechanism: str
    outcome_tuples: frozenset
    equilibrium_count: int
    sample_equilibria: tuple


def enumerate_bne_outcomes(
    problem: BayesianProblem,
    mechanism: str = "tda",
    max_profiles: int = DEFAULT_PROFILE_GUARD,
) -> BneReport:
    """Exhaustive Bayesian Nash equilibria over canonical (type-contingent)
    profiles; outcomes keyed by state. Any equilibria beyond the expected ones
    are reported, not suppressed."""
    grid = _BayesGrid(problem, mechanism, max_profiles)
    mask = grid.bne_mask()
    flat = np.nonzero(mask.reshape(-1))[0]
    tuples = frozenset(grid.outcome_tuple(int(p)) for p in flat)
    samples = tuple(grid.profile_at(int(p)) for p in flat[:3])
    return BneReport(mechanism, tuples, int(flat.size), samples)
