"""Domain types for small school-choice markets: preferences, priorities,
tier structures, problems, matchings, plus validation and JSON scenario I/O.

All types are immutable after construction and safe to share across workers.
Students and schools are opaque string ids. A matching maps every student to
a school or to ``None`` (self-matched / unassigned).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union


class ProblemValidationError(ValueError):
    """Raised with the complete list of violated invariants."""

    def __init__(self, issues: Sequence[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class GuardExceeded(RuntimeError):
    """An exhaustive operation was asked to run beyond its size guard."""


@dataclass(frozen=True)
class Preference:
    """One student's strict ranking over schools and the option of staying alone.

    ``acceptable`` holds the schools ranked above self, most-preferred first.
    ``unacceptable`` holds the schools ranked below self, most-preferred first.
    Together they cover the problem's school set exactly once, so the
    concatenation acceptable + (self) + unacceptable is a linear order.
    Mechanisms only read the acceptable prefix; the tail exists so that
    outcomes a student never asked for can still be compared.
    """

    acceptable: tuple[str, ...]
    unacceptable: tuple[str, ...] = ()

    def schools(self) -> frozenset[str]:
        return frozenset(self.acceptable) | frozenset(self.unacceptable)

    def is_acceptable(self, school: str) -> bool:
        return school in self.acceptable

    def rank(self, outcome: Optional[str]) -> int:
        """Position of ``outcome`` (a school id or None for self) in the order."""
        if outcome is None:
            return len(self.acceptable)
        try:
            return self.acceptable.index(outcome)
        except ValueError:
            return len(self.acceptable) + 1 + self.unacceptable.index(outcome)

    def prefers(self, first: Optional[str], second: Optional[str]) -> bool:
        """True when ``first`` is ranked strictly above ``second``."""
        return self.rank(first) < self.rank(second)


@dataclass(frozen=True)
class TierStructure:
    """Partition of schools into tiers 1..T, every tier nonempty."""

    tier_of: Mapping[str, int]

    @property
    def tier_count(self) -> int:
        return max(self.tier_of.values()) if self.tier_of else 0

    def schools_in(self, tier: int) -> tuple[str, ...]:
        return tuple(s for s in self.tier_of if self.tier_of[s] == tier)

    def as_vector(self, schools: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.tier_of[s] for s in schools)

    def issues(self, schools: Iterable[str]) -> list[str]:
        problems = []
        schools = list(schools)
        missing = [s for s in schools if s not in self.tier_of]
        if missing:
            problems.append(f"tiers missing for schools {sorted(missing)}")
        extra = [s for s in self.tier_of if s not in schools]
        if extra:
            problems.append(f"tiers declared for unknown schools {sorted(extra)}")
        used = set(self.tier_of[s] for s in schools if s in self.tier_of)
        if used:
            top = max(used)
            if min(used) < 1:
                problems.append("tier indices must be positive")
            for k in range(1, top + 1):
                if k not in used:
                    problems.append(f"tier {k} empty")
        return problems


@dataclass(frozen=True)
class Problem:
    """A school choice problem: ids, quotas, priorities, tiers, true preferences."""

    students: tuple[str, ...]
    schools: tuple[str, ...]
    quotas: Mapping[str, int]
    priorities: Mapping[str, tuple[str, ...]]
    tiers: TierStructure
    preferences: Mapping[str, Preference]

    def priority_rank(self, school: str, student: str) -> int:
        return self.priorities[school].index(student)

    def with_preferences(self, preferences: Mapping[str, Preference]) -> "Problem":
        return Problem(
            self.students, self.schools, self.quotas, self.priorities, self.tiers, dict(preferences)
        )

    def with_tiers(self, tiers: TierStructure) -> "Problem":
        return Problem(
            self.students, self.schools, self.quotas, self.priorities, tiers, self.preferences
        )


@dataclass(frozen=True, eq=False)
class Matching:
    """Assignment of every student to one school or to self (None)."""

    assignment: Mapping[str, Optional[str]]
    _key: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_key", tuple(sorted(self.assignment.items())))

    def __getitem__(self, student: str) -> Optional[str]:
        return self.assignment[student]

    def __eq__(self, other) -> bool:
        return isinstance(other, Matching) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        inner = ", ".join(f"({i}, {s if s is not None else i})" for i, s in self._key)
        return f"Matching({inner})"

    def students_at(self, school: str) -> frozenset[str]:
        return frozenset(i for i, s in self.assignment.items() if s == school)

    def unmatched(self) -> frozenset[str]:
        return frozenset(i for i, s in self.assignment.items() if s is None)

    def issues(self, problem: Problem) -> list[str]:
        problems = []
        if set(self.assignment) != set(problem.students):
            problems.append("matching keys are not exactly the student set")
        for i, s in self.assignment.items():
            if s is not None and s not in problem.schools:
                problems.append(f"student {i} assigned to unknown school {s}")
        for s in problem.schools:
            n = len(self.students_at(s))
            if n > problem.quotas[s]:
                problems.append(f"school {s} over quota ({n} > {problem.quotas[s]})")
        return problems


def canonicalize(preference: Preference) -> Preference:
    """Canonical representative: same acceptable prefix, tail sorted by id.

    Two reports with the same acceptable prefix are outcome-equivalent under
    every mechanism here, so enumeration works with one representative per
    ordered subset of schools.
    """
    return Preference(preference.acceptable, tuple(sorted(preference.unacceptable)))


def restrict_preference(preference: Preference, subset: Iterable[str]) -> Preference:
    """Linear order over ``subset`` and self preserving the original pairwise order."""
    subset = set(subset)
    unknown = subset - preference.schools()
    if unknown:
        raise ValueError(f"unknown school ids in subset: {sorted(unknown)}")
    return Preference(
        tuple(s for s in preference.acceptable if s in subset),
        tuple(s for s in preference.unacceptable if s in subset),
    )


def _check_unique(items: Sequence[str], what: str, issues: list[str]) -> None:
    seen = set()
    for x in items:
        if not isinstance(x, str) or not x:
            issues.append(f"{what} ids must be nonempty strings, got {x!r}")
        elif x in seen:
            issues.append(f"duplicate {what} id {x!r}")
        seen.add(x)


def validate_problem(raw: Mapping) -> Problem:
    """Build a Problem from raw scenario data, reporting every violated invariant.

    ``raw`` follows the scenario file schema: students, schools, quotas,
    priorities (school -> ranked student list), tiers (school -> tier index),
    preferences (student -> {acceptable, unacceptable}).
    """
    issues: list[str] = []
    students = tuple(raw.get("students", ()))
    schools = tuple(raw.get("schools", ()))
    _check_unique(students, "student", issues)
    _check_unique(schools, "school", issues)
    if set(students) & set(schools):
        issues.append("student and school ids overlap")

    quotas = dict(raw.get("quotas", {}))
    for s in schools:
        if s not in quotas:
            issues.append(f"quota missing for school {s}")
        elif not isinstance(quotas[s], int) or quotas[s] < 0:
            issues.append(f"negative or non-integer quota for school {s}")
    for s in quotas:
        if s not in schools:
            issues.append(f"quota declared for unknown school {s}")

    priorities: dict[str, tuple[str, ...]] = {}
    raw_priorities = raw.get("priorities", {})
    for s in schools:
        if s not in raw_priorities:
            issues.append(f"priority order missing for school {s}")
            continue
        order = tuple(raw_priorities[s])
        priorities[s] = order
        if sorted(order) != sorted(students):
            issues.append(f"priority for school {s} not a permutation of the students")
    for s in raw_priorities:
        if s not in schools:
            issues.append(f"priority declared for unknown school {s}")

    tiers = TierStructure(dict(raw.get("tiers", {})))
    issues.extend(tiers.issues(schools))

    preferences: dict[str, Preference] = {}
    raw_prefs = raw.get("preferences", {})
    for i in students:
        if i not in raw_prefs:
            issues.append(f"preference missing for student {i}")
            continue
        entry = raw_prefs[i]
        if isinstance(entry, Preference):
            pref = entry
        else:
            pref = Preference(
                tuple(entry.get("acceptable", ())), tuple(entry.get("unacceptable", ()))
            )
        preferences[i] = pref
        listed = list(pref.acceptable) + list(pref.unacceptable)
        if sorted(listed) != sorted(schools):
            issues.append(f"preference for student {i} is not a linear order over the schools")
    for i in raw_prefs:
        if i not in students:
            issues.append(f"preference declared for unknown student {i}")

    if issues:
        raise ProblemValidationError(issues)
    return Problem(students, schools, quotas, priorities, tiers, preferences)


# ---------------------------------------------------------------------------
# Scenario and matching files (JSON, UTF-8)


def problem_to_dict(problem: Problem) -> dict:
    return {
        "students": list(problem.students),
        "schools": list(problem.schools),
        "quotas": {s: problem.quotas[s] for s in problem.schools},
        "priorities": {s: list(problem.priorities[s]) for s in problem.schools},
        "tiers": {s: problem.tiers.tier_of[s] for s in problem.schools},
        "preferences": {
            i: {
                "acceptable": list(problem.preferences[i].acceptable),
                "unacceptable": list(problem.preferences[i].unacceptable),
            }
            for i in problem.students
        },
    }


def problem_to_json(problem: Problem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2, sort_keys=True)


def parse_problem(source: Union[str, Path]) -> Problem:
    """Parse and validate a scenario file (path or JSON text)."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
    return validate_problem(json.loads(text))


def load_problem(path: Union[str, Path]) -> Problem:
    return parse_problem(Path(path))


def matching_to_dict(matching: Matching) -> dict:
    return {"assignment": dict(sorted(matching.assignment.items()))}


def matching_to_json(matching: Matching) -> str:
    return json.dumps(matching_to_dict(matching), indent=2, sort_keys=True)


def parse_matching(source: Union[str, Path]) -> Matching:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
    data = json.loads(text)
    return Matching(dict(data["assignment"]))


def parse_profile(source: Union[str, Path]) -> dict[str, Preference]:
    """Parse a reported-preference profile file (same encoding as scenario files)."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
    data = json.loads(text)
    return {
        i: Preference(tuple(entry.get("acceptable", ())), tuple(entry.get("unacceptable", ())))
        for i, entry in data.items()
    }
