"""Preference-revelation games induced by the matching mechanisms.

Everything here works on the canonical strategy space: one representative
report per ordered subset of schools, since reports with equal acceptable
prefixes are outcome-equivalent under both mechanisms. Outcome tables are
memoized per (problem, mechanism, tier structure) and all equilibrium,
dominance and audit sweeps run as array scans over those tables.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    GuardExceeded,
    Matching,
    Preference,
    Problem,
    TierStructure,
    canonicalize,
    problem_to_dict,
)
from .analysis import (
    BETTER,
    EQUAL,
    WORSE,
    find_blocking_pairs,
    find_cycles,
    is_stable,
    is_stable_wrt_tiers,
    responsive_dominates,
    sosm,
    stable_set,
    within_tier_acyclic,
    Cycle,
)
from .mechanisms import apply_mechanism, finest_tiers

DEFAULT_PROFILE_GUARD = 10**6
DEFAULT_SCHOOL_GUARD = 5


def strategy_space(schools: Sequence[str], max_schools: int = DEFAULT_SCHOOL_GUARD) -> list[Preference]:
    """All canonical reports: every ordered subset of schools as the acceptable
    prefix, remaining schools sorted into the tail."""
    if len(schools) > max_schools:
        raise GuardExceeded(f"strategy space over {len(schools)} schools exceeds guard {max_schools}")
    space = []
    for k in range(len(schools) + 1):
        for prefix in itertools.permutations(schools, k):
            space.append(Preference(prefix, tuple(sorted(set(schools) - set(prefix)))))
    return space


# ---------------------------------------------------------------------------
# Outcome tables


def _int_da(n_students, quotas, prank, acceptable, participants=None):
    """Deferred acceptance over integer ids; returns school index per student
    (or -1 for self). ``acceptable`` maps student index -> tuple of school
    indices; ``prank[s][i]`` is student i's rank at school s."""
    out = [-1] * n_students
    held: dict[int, list[int]] = {}
    nxt = [0] * n_students
    queue = list(range(n_students)) if participants is None else list(participants)
    for s in set(x for i in queue for x in acceptable[i]):
        held[s] = []
    while queue:
        i = queue.pop()
        choices = acceptable[i]
        while nxt[i] < len(choices):
            s = choices[nxt[i]]
            nxt[i] += 1
            slots = held[s]
            slots.append(i)
            if len(slots) <= quotas[s]:
                break
            slots.sort(key=lambda j: prank[s][j])
            rejected = slots.pop()
            if rejected != i:
                queue.append(rejected)
                break
    for s, slots in held.items():
        for i in slots:
            out[i] = s
    return out


class OutcomeTable:
    """Total mapping from canonical strategy profiles to matchings.

    Profiles are indexed in mixed radix over the strategy list, student axes
    in problem order. ``codes[p, i]`` is the school index assigned to student
    i (``m`` means self-matched).
    """

    def __init__(
        self,
        problem: Problem,
        mechanism: str = "tda",
        tiers: Optional[TierStructure] = None,
        max_profiles: int = DEFAULT_PROFILE_GUARD,
    ):
        if mechanism not in ("da", "tda"):
            raise ValueError(f"unknown mechanism tag {mechanism!r}")
        self.problem = problem
        self.mechanism = mechanism
        self.tiers = (problem.tiers if tiers is None else tiers) if mechanism == "tda" else None
        self.strategies = strategy_space(problem.schools)
        self.sigma = len(self.strategies)
        self.n = len(problem.students)
        self.m = len(problem.schools)
        self.size = self.sigma**self.n
        if self.size > max_profiles:
            raise GuardExceeded(
                f"{self.size} strategy profiles exceed the guard {max_profiles}; "
                f"raise it explicitly if this is intended"
            )
        self._prefix_index = {p.acceptable: k for k, p in enumerate(self.strategies)}
        self.codes = self._build()
        self._radix = np.array(
            [self.sigma ** (self.n - 1 - i) for i in range(self.n)], dtype=np.int64
        )
        self._digits = (np.arange(self.size)[:, None] // self._radix[None, :]) % self.sigma
        self._qminus_cache: dict[int, np.ndarray] = {}
        self._best_cache: dict = {}
        self._rank_cache: dict = {}

    def _build(self) -> np.ndarray:
        problem, strategies = self.problem, self.strategies
        n, m, sigma = self.n, self.m, self.sigma
        school_idx = {s: k for k, s in enumerate(problem.schools)}
        quotas = [problem.quotas[s] for s in problem.schools]
        prank = [
            {i: r for r, i in enumerate(problem.priorities[s])} for s in problem.schools
        ]
        prank = [
            [prank[s][problem.students[i]] for i in range(n)] for s in range(m)
        ]
        prefixes = [tuple(school_idx[s] for s in strat.acceptable) for strat in strategies]
        codes = np.empty((self.size, n), dtype=np.int16)

        if self.mechanism == "da":
            rounds = [tuple(range(m))]
            by_round = [prefixes]
        else:
            tier_count = self.tiers.tier_count
            rounds = [
                tuple(school_idx[s] for s in problem.schools if self.tiers.tier_of[s] == k + 1)
                for k in range(tier_count)
            ]
            by_round = [
                [tuple(s for s in prefix if s in set(r)) for prefix in prefixes] for r in rounds
            ]

        for p, combo in enumerate(itertools.product(range(sigma), repeat=n)):
            assigned = [-1] * n
            remaining = list(range(n))
            for rnd, tier_schools in enumerate(rounds):
                if not remaining:
                    break
                acc = [by_round[rnd][combo[i]] for i in range(n)]
                result = _int_da(n, quotas, prank, acc, participants=remaining)
                still = []
                for i in remaining:
                    if result[i] >= 0:
                        assigned[i] = result[i]
                    else:
                        still.append(i)
                remaining = still
            for i in range(n):
                codes[p, i] = assigned[i] if assigned[i] >= 0 else m
        return codes

    # -- indexing helpers ---------------------------------------------------

    def strategy_index(self, preference: Preference) -> int:
        try:
            return self._prefix_index[preference.acceptable]
        except KeyError:
            raise ValueError(f"report {preference} is not over this problem's school set")

    def profile_index(self, profile: Mapping[str, Preference]) -> int:
        digits = [self.strategy_index(profile[i]) for i in self.problem.students]
        return int(sum(d * r for d, r in zip(digits, self._radix)))

    def profile_at(self, index: int) -> dict[str, Preference]:
        return {
            i: self.strategies[int(self._digits[index, k])]
            for k, i in enumerate(self.problem.students)
        }

    def matching_from_codes(self, row: Sequence[int]) -> Matching:
        schools = self.problem.schools
        return Matching(
            {
                i: (schools[int(c)] if int(c) < self.m else None)
                for i, c in zip(self.problem.students, row)
            }
        )

    def matching_at(self, index: int) -> Matching:
        return self.matching_from_codes(self.codes[index])

    def lookup(self, profile: Mapping[str, Preference]) -> Matching:
        return self.matching_at(self.profile_index(profile))

    def mapping(self) -> dict[tuple[Preference, ...], Matching]:
        """Materialize the full table (small spaces only)."""
        out = {}
        for p in range(self.size):
            key = tuple(
                self.strategies[int(self._digits[p, k])] for k in range(self.n)
            )
            out[key] = self.matching_at(p)
        return out

    # -- equilibrium machinery ----------------------------------------------

    def code_ranks(self, preference: Preference) -> np.ndarray:
        """Rank of each outcome code under a (true) preference; lower is better."""
        key = (preference.acceptable, preference.unacceptable)
        if key not in self._rank_cache:
            schools = self.problem.schools
            self._rank_cache[key] = np.array(
                [preference.rank(schools[c]) for c in range(self.m)] + [preference.rank(None)],
                dtype=np.int16,
            )
        return self._rank_cache[key]

    def qminus(self, i: int) -> np.ndarray:
        """Opponent-profile index (mixed radix without student i's digit)."""
        if i not in self._qminus_cache:
            radix = [self.sigma ** (self.n - 2 - k) for k in range(self.n - 1)]
            cols = [k for k in range(self.n) if k != i]
            self._qminus_cache[i] = (
                self._digits[:, cols] * np.array(radix, dtype=np.int64)[None, :]
            ).sum(axis=1)
        return self._qminus_cache[i]

    def outcome_matrix(self, i: int) -> np.ndarray:
        """Codes reshaped to (own strategy, opponent profile) for student i."""
        key = ("mat", i)
        if key not in self._best_cache:
            grid = self.codes[:, i].reshape((self.sigma,) * self.n)
            grid = np.moveaxis(grid, i, 0)
            self._best_cache[key] = grid.reshape(self.sigma, self.sigma ** (self.n - 1))
        return self._best_cache[key]

    def best_rank(self, i: int, preference: Preference) -> np.ndarray:
        """Best achievable rank for student i against each opponent profile."""
        key = ("best", i, preference.acceptable, preference.unacceptable)
        if key not in self._best_cache:
            ranks = self.code_ranks(preference)
            self._best_cache[key] = ranks[self.outcome_matrix(i)].min(axis=0)
        return self._best_cache[key]

    def nash_ok(self, i: int, preference: Preference) -> np.ndarray:
        """Per profile: student i has no profitable canonical deviation."""
        key = ("ok", i, preference.acceptable, preference.unacceptable)
        if key not in self._best_cache:
            ranks = self.code_ranks(preference)
            self._best_cache[key] = (
                ranks[self.codes[:, i]] == self.best_rank(i, preference)[self.qminus(i)]
            )
        return self._best_cache[key]

    def nash_mask(self, true_prefs: Optional[Mapping[str, Preference]] = None) -> np.ndarray:
        true_prefs = self.problem.preferences if true_prefs is None else true_prefs
        mask = np.ones(self.size, dtype=bool)
        for k, student in enumerate(self.problem.students):
            mask &= self.nash_ok(k, true_prefs[student])
        return mask

    def dominance_undominated(self, i: int, preference: Preference) -> np.ndarray:
        """Boolean vector over strategies: not weakly dominated for student i
        whose true preference is given."""
        ranks = self.code_ranks(preference)[self.outcome_matrix(i)]
        never_worse = (ranks[:, None, :] <= ranks[None, :, :]).all(axis=2)
        sometimes_better = (ranks[:, None, :] < ranks[None, :, :]).any(axis=2)
        dominated = (never_worse & sometimes_better).any(axis=0)
        return ~dominated


_TABLE_CACHE: dict = {}
_TABLE_CACHE_LIMIT = 64


def _tiers_key(tiers: Optional[TierStructure]) -> Optional[tuple]:
    return None if tiers is None else tuple(sorted(tiers.tier_of.items()))


def _table_key(problem: Problem, tiers: Optional[TierStructure], mechanism: str) -> tuple:
    # Tables depend on the market structure and reports, never on true preferences.
    return (
        problem.students,
        problem.schools,
        tuple(sorted(problem.quotas.items())),
        tuple(sorted((s, tuple(p)) for s, p in problem.priorities.items())),
        mechanism,
        _tiers_key((problem.tiers if tiers is None else tiers) if mechanism == "tda" else None),
    )


def profile_space_size(n_students: int, n_schools: int) -> int:
    per_student = sum(math.perm(n_schools, k) for k in range(n_schools + 1))
    return per_student**n_students


def outcome_table(
    problem: Problem,
    tiers: Optional[TierStructure] = None,
    mechanism: str = "tda",
    max_profiles: int = DEFAULT_PROFILE_GUARD,
    cache: bool = True,
) -> OutcomeTable:
    """Memoized outcome table for (problem, mechanism, tier structure)."""
    size = profile_space_size(len(problem.students), len(problem.schools))
    if size > max_profiles:
        raise GuardExceeded(
            f"{size} strategy profiles exceed the guard {max_profiles}; "
            f"raise it explicitly if this is intended"
        )
    key = _table_key(problem, tiers, mechanism)
    if cache and key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    table = OutcomeTable(problem, mechanism, tiers, max_profiles)
    if cache:
        if len(_TABLE_CACHE) >= _TABLE_CACHE_LIMIT:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = table
    return table


# ---------------------------------------------------------------------------
# Nash equilibria


@dataclass(frozen=True)
class EquilibriumReport:
    mechanism: str
    tiers: Optional[TierStructure]
    students: tuple[str, ...]
    equilibria: frozenset
    outcomes: frozenset

    def profiles(self) -> list[dict[str, Preference]]:
        ordered = sorted(
            self.equilibria, key=lambda combo: tuple((p.acceptable, p.unacceptable) for p in combo)
        )
        return [dict(zip(self.students, combo)) for combo in ordered]


def is_nash(
    problem: Problem,
    tiers: Optional[TierStructure],
    mechanism: str,
    profile: Mapping[str, Preference],
    table: Optional[OutcomeTable] = None,
) -> bool:
    """No student has a canonical unilateral deviation that strictly improves
    his outcome under his true preference."""
    table = table or outcome_table(problem, tiers, mechanism)
    canonical = {i: canonicalize(p) for i, p in profile.items()}
    index = table.profile_index(canonical)
    for k, student in enumerate(problem.students):
        if not table.nash_ok(k, problem.preferences[student])[index]:
            return False
    return True


def _outcomes_of_mask(table: OutcomeTable, mask: np.ndarray) -> frozenset[Matching]:
    rows = np.unique(table.codes[mask], axis=0)
    return frozenset(table.matching_from_codes(row) for row in rows)


def enumerate_nash_outcomes(
    problem: Problem,
    tiers: Optional[TierStructure] = None,
    mechanism: str = "tda",
    table: Optional[OutcomeTable] = None,
) -> EquilibriumReport:
    """Exhaustive Nash equilibria of the revelation game over canonical profiles."""
    table = table or outcome_table(problem, tiers, mechanism)
    mask = table.nash_mask(problem.preferences)
    indices = np.nonzero(mask)[0]
    equilibria = frozenset(
        tuple(table.strategies[int(d)] for d in table._digits[p]) for p in indices
    )
    return EquilibriumReport(
        mechanism, table.tiers, problem.students, equilibria, _outcomes_of_mask(table, mask)
    )


# ---------------------------------------------------------------------------
# Preference transforms


def reshuffle(preference: Preference, tiers: TierStructure) -> Preference:
    """Regroup the acceptable schools tier by tier (ascending), preserving the
    within-tier order; unacceptable schools go behind self in canonical order."""
    prefix = []
    for k in range(1, tiers.tier_count + 1):
        prefix.extend(s for s in preference.acceptable if tiers.tier_of[s] == k)
    return Preference(tuple(prefix), tuple(sorted(preference.unacceptable)))


def is_aligned(preference: Preference, tiers: TierStructure) -> bool:
    """The acceptable prefix never ranks a later-tier school above an earlier one."""
    levels = [tiers.tier_of[s] for s in preference.acceptable]
    return all(a <= b for a, b in zip(levels, levels[1:]))


def within_tier_consistent(
    report: Preference, true: Preference, tiers: TierStructure
) -> Preference:
    """Reorder each tier's acceptable block of the report into true-preference
    order, leaving acceptability and cross-tier block positions unchanged."""
    prefix = list(report.acceptable)
    for k in range(1, tiers.tier_count + 1):
        slots = [idx for idx, s in enumerate(prefix) if tiers.tier_of[s] == k]
        ordered = sorted((prefix[idx] for idx in slots), key=true.rank)
        for idx, school in zip(slots, ordered):
            prefix[idx] = school
    return Preference(tuple(prefix), tuple(sorted(report.unacceptable)))


# ---------------------------------------------------------------------------
# Manipulability and the aligned-domain strategy-proofness check


@dataclass(frozen=True)
class Deviation:
    student: str
    report: Preference
    outcome: Optional[str]
    truthful_outcome: Optional[str]


def is_manipulable_at(
    problem: Problem,
    tiers: Optional[TierStructure] = None,
    mechanism: str = "tda",
    table: Optional[OutcomeTable] = None,
) -> tuple[bool, Optional[Deviation]]:
    """True when the truthful profile is not a Nash equilibrium; the witness is
    the first profitable deviation by (student id, strategy index)."""
    table = table or outcome_table(problem, tiers, mechanism)
    truthful = {i: canonicalize(problem.preferences[i]) for i in problem.students}
    base = table.profile_index(truthful)
    for student in sorted(problem.students):
        k = problem.students.index(student)
        true = problem.preferences[student]
        ranks = table.code_ranks(true)
        current = ranks[table.codes[base, k]]
        own_digit = int(table._digits[base, k])
        stride = int(table._radix[k])
        for alt in range(table.sigma):
            if alt == own_digit:
                continue
            p = base + (alt - own_digit) * stride
            code = int(table.codes[p, k])
            if ranks[code] < current:
                outcome = problem.schools[code] if code < table.m else None
                truthful_code = int(table.codes[base, k])
                truthful_outcome = (
                    problem.schools[truthful_code] if truthful_code < table.m else None
                )
                return True, Deviation(student, table.strategies[alt], outcome, truthful_outcome)
    return False, None


@dataclass(frozen=True)
class AlignmentWitness:
    """Manipulation environment built for a student whose true preference puts
    a later-tier school above an earlier-tier one."""

    student: str
    early_school: str
    late_school: str
    environment: Problem
    deviation: Preference
    truthful_outcome: Optional[str]
    deviating_outcome: Optional[str]


def _first_alignment_violation(preference: Preference, tiers: TierStructure):
    prefix = preference.acceptable
    for p in range(len(prefix)):
        for q in range(p + 1, len(prefix)):
            if tiers.tier_of[prefix[p]] > tiers.tier_of[prefix[q]]:
                return prefix[q], prefix[p]  # (earlier-tier school, preferred later-tier school)
    return None


def check_aligned_domain_strategyproofness(
    problem: Problem, tiers: Optional[TierStructure] = None
) -> tuple[bool, Optional[AlignmentWitness]]:
    """Strategy-proofness holds exactly on aligned true preferences.

    With every true preference aligned, the full deviation scan at the
    truthful profile is run and must come up empty. Otherwise a manipulation
    environment is built for the first unaligned student: quota 0 everywhere
    except the violating pair, top priority for the student at the later-tier
    school, rivals listing both schools as unacceptable. Truth then yields the
    earlier-tier school and dropping it yields the preferred one.
    """
    tiers = problem.tiers if tiers is None else tiers
    unaligned = [
        i for i in sorted(problem.students) if not is_aligned(problem.preferences[i], tiers)
    ]
    if not unaligned:
        manipulable, witness = is_manipulable_at(problem.with_tiers(tiers), tiers, "tda")
        if manipulable:
            return False, AlignmentWitness(
                witness.student, "", "", problem, witness.report, witness.truthful_outcome,
                witness.outcome,
            )
        return True, None

    student = unaligned[0]
    true = problem.preferences[student]
    early, late = _first_alignment_violation(true, tiers)
    quotas = {s: (1 if s in (early, late) else 0) for s in problem.schools}
    order = [student] + sorted(set(problem.students) - {student})
    priorities = {s: tuple(order) for s in problem.schools}
    preferences = {
        j: Preference((), tuple(sorted(problem.schools))) for j in problem.students
    }
    preferences[student] = true
    environment = Problem(
        problem.students, problem.schools, quotas, priorities, tiers, preferences
    )
    truthful = apply_mechanism(environment, "tda")[student]
    deviation = Preference(
        tuple(s for s in true.acceptable if s != early),
        tuple(sorted(set(true.unacceptable) | {early})),
    )
    deviating = apply_mechanism(
        environment, "tda", {**preferences, student: deviation}
    )[student]
    if truthful != early or deviating != late:
        raise RuntimeError("manipulation environment failed its postcondition")
    return False, AlignmentWitness(student, early, late, environment, deviation, truthful, deviating)


# ---------------------------------------------------------------------------
# Weak dominance


def is_weakly_dominated(
    problem: Problem,
    tiers: Optional[TierStructure],
    mechanism: str,
    student: str,
    strategy: Preference,
    table: Optional[OutcomeTable] = None,
) -> tuple[bool, Optional[Preference]]:
    """First canonical strategy (by index) that weakly dominates the given one,
    outcomes compared under the student's true preference."""
    table = table or outcome_table(problem, tiers, mechanism)
    k = problem.students.index(student)
    ranks = table.code_ranks(problem.preferences[student])[table.outcome_matrix(k)]
    target = table.strategy_index(canonicalize(strategy))
    base = ranks[target]
    for candidate in range(table.sigma):
        if candidate == target:
            continue
        cand = ranks[candidate]
        if np.all(cand <= base) and np.any(cand < base):
            return True, table.strategies[candidate]
    return False, None


def enumerate_undominated_nash_outcomes(
    problem: Problem,
    tiers: Optional[TierStructure] = None,
    mechanism: str = "tda",
    table: Optional[OutcomeTable] = None,
) -> EquilibriumReport:
    """Nash equilibria in which no student plays a weakly dominated strategy."""
    table = table or outcome_table(problem, tiers, mechanism)
    mask = table.nash_mask(problem.preferences)
    for k, student in enumerate(problem.students):
        keep = table.dominance_undominated(k, problem.preferences[student])
        mask &= keep[table._digits[:, k]]
    indices = np.nonzero(mask)[0]
    equilibria = frozenset(
        tuple(table.strategies[int(d)] for d in table._digits[p]) for p in indices
    )
    return EquilibriumReport(
        mechanism, table.tiers, problem.students, equilibria, _outcomes_of_mask(table, mask)
    )


# ---------------------------------------------------------------------------
# Proof constructions


@dataclass(frozen=True)
class CycleCounterexample:
    problem: Problem
    equilibrium: dict[str, Preference]
    outcome: Matching
    blocked_student: str
    blocking_school: str


def construct_cycle_counterexample(
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    tiers: TierStructure,
    cycle: Cycle,
) -> CycleCounterexample:
    """Instantiate the rejection-chain construction on a within-tier cycle.

    The returned problem's truthful profile routes the cycle's mid student
    into a justified-envy position once he stays out of the market, which the
    equilibrium profile makes him do. Verified before returning: the profile
    is a Nash equilibrium and the outcome has the stated blocking pair.
    """
    a, b = cycle.school_a, cycle.school_b
    if tiers.tier_of[a] != tiers.tier_of[b]:
        raise ValueError("cycle spans tiers; the construction needs both schools in one tier")
    schools = tuple(sorted(tiers.tier_of))
    students = tuple(sorted(priorities[a]))

    def pref(*acc: str) -> Preference:
        return Preference(tuple(acc), tuple(sorted(set(schools) - set(acc))))

    preferences = {l: pref() for l in students}
    for l in cycle.extras_a:
        preferences[l] = pref(a)
    for l in cycle.extras_b:
        preferences[l] = pref(b)
    preferences[cycle.high] = pref(b, a)
    preferences[cycle.mid] = pref(a)
    preferences[cycle.low] = pref(a, b)

    problem = Problem(
        students,
        schools,
        dict(quotas),
        {s: tuple(priorities[s]) for s in schools},
        tiers,
        preferences,
    )
    equilibrium = dict(preferences)
    equilibrium[cycle.mid] = pref()
    outcome = apply_mechanism(problem, "tda", equilibrium)
    if not is_nash(problem, tiers, "tda", equilibrium):
        raise RuntimeError("cycle construction failed: profile is not an equilibrium")
    pairs = {(p.student, p.school) for p in find_blocking_pairs(problem, outcome)}
    if (cycle.mid, a) not in pairs:
        raise RuntimeError("cycle construction failed: expected blocking pair is missing")
    return CycleCounterexample(problem, equilibrium, outcome, cycle.mid, a)


@dataclass(frozen=True)
class WelfareCounterexample:
    problem: Problem
    equilibrium: dict[str, Preference]
    equilibrium_outcome: Matching
    truthful_optimum: Matching
    target: str


def construct_welfare_counterexample(
    students: Sequence[str],
    target: str,
    tiers: TierStructure,
    companions: Sequence[str],
) -> WelfareCounterexample:
    """Problem and equilibrium making the target school strictly worse off than
    under the student-optimal stable matching.

    One companion must share the target's tier; alternatively two companions
    must share some other tier. Needs at least three students.
    """
    if len(students) < 3:
        raise ValueError("the construction needs at least three students")
    schools = tuple(sorted(tiers.tier_of))
    if target not in schools or any(c not in schools for c in companions):
        raise ValueError("target/companion schools missing from the tier structure")
    first, second, third = sorted(students)[:3]
    rest = sorted(set(students) - {first, second, third})
    quotas = {s: 1 for s in schools}

    def order(*front: str) -> tuple[str, ...]:
        return tuple(list(front) + [i for i in sorted(students) if i not in front])

    def pref(*acc: str) -> Preference:
        return Preference(tuple(acc), tuple(sorted(set(schools) - set(acc))))

    priorities = {s: order() for s in schools}
    if len(companions) == 1:
        companion = companions[0]
        if tiers.tier_of[companion] != tiers.tier_of[target]:
            raise ValueError("single companion must share the target's tier")
        priorities[target] = order(first, second, third)
        priorities[companion] = order(third, first)
        preferences = {i: pref() for i in students}
        preferences[first] = pref(companion, target)
        preferences[second] = pref(target)
        preferences[third] = pref(target, companion)
        equilibrium = dict(preferences)
        equilibrium[second] = pref()
    elif len(companions) == 2:
        comp1, comp2 = companions
        if tiers.tier_of[comp1] != tiers.tier_of[comp2]:
            raise ValueError("the two companions must share a tier")
        if tiers.tier_of[comp1] == tiers.tier_of[target]:
            raise ValueError("two-companion case needs a tier other than the target's")
        priorities[target] = order(third, second)
        priorities[comp1] = order(first, second, third)
        priorities[comp2] = order(third, first)
        preferences = {i: pref() for i in students}
        preferences[first] = pref(comp2, target, comp1)
        preferences[second] = pref(comp1, target, comp2)
        preferences[third] = pref(comp1, target, comp2)
        equilibrium = dict(preferences)
        equilibrium[first] = pref(comp2, comp1)
        equilibrium[second] = pref(target)
        equilibrium[third] = pref(comp1, comp2)
    else:
        raise ValueError("pass one companion (same tier) or two (another shared tier)")

    problem = Problem(tuple(sorted(students)), schools, quotas, priorities, tiers, preferences)
    optimum = sosm(problem)
    outcome = apply_mechanism(problem, "tda", equilibrium)
    if not is_nash(problem, tiers, "tda", equilibrium):
        raise RuntimeError("welfare construction failed: profile is not an equilibrium")
    verdict = responsive_dominates(
        target,
        outcome.students_at(target),
        optimum.students_at(target),
        quotas[target],
        priorities[target],
    )
    if verdict != WORSE:
        raise RuntimeError("welfare construction failed: target school is not strictly worse off")
    return WelfareCounterexample(problem, equilibrium, outcome, optimum, target)


# ---------------------------------------------------------------------------
# Guarantee audit


@dataclass(frozen=True)
class GuaranteeViolation:
    true_profile: dict[str, Preference]
    equilibrium: dict[str, Preference]
    outcome: Matching
    truthful_optimum: Matching
    school: str
    verdict: str


@dataclass(frozen=True)
class GuaranteeReport:
    passed: bool
    profiles_checked: int
    violation: Optional[GuaranteeViolation] = None


def _protected_verdicts(problem, tda_table, da_table, mask, truth_index, protected):
    """Yield (outcome row, school, verdict) for protected schools not weakly
    better off than under the truthful student-optimal matching."""
    sosm_row = da_table.codes[truth_index]
    rows = np.unique(tda_table.codes[mask], axis=0)
    m = tda_table.m
    for row in rows:
        for s in protected:
            s_idx = problem.schools.index(s)
            assigned = [problem.students[k] for k in range(tda_table.n) if row[k] == s_idx]
            reference = [problem.students[k] for k in range(tda_table.n) if sosm_row[k] == s_idx]
            verdict = responsive_dominates(
                s, assigned, reference, problem.quotas[s], problem.priorities[s]
            )
            if verdict not in (BETTER, EQUAL):
                yield row, s, verdict


def audit_true_profile(
    problem: Problem,
    tiers: Optional[TierStructure] = None,
    protected: Sequence[str] = (),
    tda_table: Optional[OutcomeTable] = None,
    da_table: Optional[OutcomeTable] = None,
) -> Optional[GuaranteeViolation]:
    """Check the guarantee at one true profile (the problem's); None when it holds."""
    tda_table = tda_table or outcome_table(problem, tiers, "tda")
    da_table = da_table or outcome_table(problem, mechanism="da")
    truthful = {i: canonicalize(problem.preferences[i]) for i in problem.students}
    truth_index = tda_table.profile_index(truthful)
    mask = tda_table.nash_mask(problem.preferences)
    for row, school, verdict in _protected_verdicts(
        problem, tda_table, da_table, mask, truth_index, protected
    ):
        witness = int(np.nonzero(mask & (tda_table.codes == row).all(axis=1))[0][0])
        return GuaranteeViolation(
            truthful,
            tda_table.profile_at(witness),
            tda_table.matching_from_codes(row),
            da_table.matching_at(truth_index),
            school,
            verdict,
        )
    return None


def guarantee_audit(
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    tiers: TierStructure,
    protected: Sequence[str],
    max_profiles: int = DEFAULT_PROFILE_GUARD,
) -> GuaranteeReport:
    """Traverse every canonical true profile; each protected school must weakly
    prefer every tiered-mechanism equilibrium outcome to the truthful
    student-optimal matching. Responsive incomparability counts as a violation
    and is reported with its own verdict tag.
    """
    schools = tuple(sorted(tiers.tier_of))
    students = tuple(sorted(priorities[schools[0]]))
    strategies = strategy_space(schools)
    placeholder = {i: strategies[0] for i in students}
    base = Problem(
        students, schools, dict(quotas), {s: tuple(priorities[s]) for s in schools}, tiers,
        placeholder,
    )
    sigma = len(strategies)
    if sigma ** len(students) > max_profiles:
        raise GuardExceeded(
            f"audit needs {sigma ** len(students)} true profiles, over the guard {max_profiles}"
        )
    tda_table = outcome_table(base, tiers, "tda", max_profiles)
    da_table = outcome_table(base, mechanism="da", max_profiles=max_profiles)

    ok_rows = [
        [tda_table.nash_ok(k, pref) for pref in strategies] for k in range(len(students))
    ]
    checked = 0
    for truth in itertools.product(range(sigma), repeat=len(students)):
        checked += 1
        mask = ok_rows[0][truth[0]].copy()
        for k in range(1, len(students)):
            mask &= ok_rows[k][truth[k]]
        truth_index = int(sum(t * r for t, r in zip(truth, tda_table._radix)))
        true_profile = {i: strategies[t] for i, t in zip(students, truth)}
        problem = base.with_preferences(true_profile)
        for row, school, verdict in _protected_verdicts(
            problem, tda_table, da_table, mask, truth_index, protected
        ):
            witness = int(np.nonzero(mask & (tda_table.codes == row).all(axis=1))[0][0])
            return GuaranteeReport(
                False,
                checked,
                GuaranteeViolation(
                    true_profile,
                    tda_table.profile_at(witness),
                    tda_table.matching_from_codes(row),
                    da_table.matching_at(truth_index),
                    school,
                    verdict,
                ),
            )
    return GuaranteeReport(True, checked)


# ---------------------------------------------------------------------------
# Randomized theorem harness


@dataclass
class HarnessFailure:
    trial: int
    check: str
    detail: str
    problem: dict


@dataclass
class HarnessReport:
    trials: int
    checks: dict[str, int] = field(default_factory=dict)
    failures: list[HarnessFailure] = field(default_factory=list)
    conjecture_counterexamples: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def _random_tier_pair(rng: random.Random, schools: Sequence[str]):
    """A coarse structure and a random refinement of it."""
    shuffled = list(schools)
    rng.shuffle(shuffled)
    coarse_blocks: list[list[str]] = []
    for s in shuffled:
        if coarse_blocks and rng.random() < 0.5:
            coarse_blocks[-1].append(s)
        else:
            coarse_blocks.append([s])
    fine_blocks: list[list[str]] = []
    for block in coarse_blocks:
        sub = list(block)
        rng.shuffle(sub)
        parts: list[list[str]] = []
        for s in sub:
            if parts and rng.random() < 0.5:
                parts[-1].append(s)
            else:
                parts.append([s])
        fine_blocks.extend(parts)
    coarse = TierStructure(
        {s: k + 1 for k, block in enumerate(coarse_blocks) for s in block}
    )
    fine = TierStructure({s: k + 1 for k, block in enumerate(fine_blocks) for s in block})
    return fine, coarse


def _random_problem(rng: random.Random, students, schools, strategies):
    quotas = {s: rng.choices([0, 1, 2], weights=[1, 7, 2])[0] for s in schools}
    priorities = {s: tuple(rng.sample(students, len(students))) for s in schools}
    fine, coarse = _random_tier_pair(rng, schools)
    preferences = {i: rng.choice(strategies) for i in students}
    problem = Problem(tuple(students), tuple(schools), quotas, priorities, fine, preferences)
    return problem, fine, coarse


def _reshuffle_index_map(table: OutcomeTable, tiers: TierStructure) -> np.ndarray:
    return np.array(
        [table.strategy_index(reshuffle(p, tiers)) for p in table.strategies], dtype=np.int64
    )


def _remap_profiles(table: OutcomeTable, indices: np.ndarray, strat_map: np.ndarray) -> np.ndarray:
    digits = strat_map[table._digits[indices]]
    return digits @ table._radix


def run_harness_trial(
    trial: int,
    seed: int,
    n_students: int = 3,
    n_schools: int = 3,
    probe_conjecture: bool = False,
) -> tuple[dict[str, int], list[HarnessFailure], list[dict]]:
    """One randomized instance; returns per-check counts and any failures."""
    rng = random.Random(seed * 1_000_003 + trial)
    students = [str(k + 1) for k in range(n_students)]
    schools = [chr(ord("a") + k) for k in range(n_schools)]
    strategies = strategy_space(schools)
    problem, fine, coarse = _random_problem(rng, students, schools, strategies)
    dump = problem_to_dict(problem)
    dump["tiers_fine"] = {s: fine.tier_of[s] for s in schools}
    dump["tiers_coarse"] = {s: coarse.tier_of[s] for s in schools}

    counts: dict[str, int] = {}
    failures: list[HarnessFailure] = []
    probes: list[dict] = []

    def fail(check: str, detail: str) -> None:
        failures.append(HarnessFailure(trial, check, detail, dump))

    def ran(check: str) -> None:
        counts[check] = counts.get(check, 0) + 1

    table_fine = outcome_table(problem, fine, "tda", cache=False)
    table_coarse = outcome_table(problem, coarse, "tda", cache=False)
    table_da = outcome_table(problem, mechanism="da", cache=False)
    stable = stable_set(problem)
    mask_fine = table_fine.nash_mask()
    mask_coarse = table_coarse.nash_mask()
    outcomes_fine = _outcomes_of_mask(table_fine, mask_fine)
    outcomes_coarse = _outcomes_of_mask(table_coarse, mask_coarse)

    # Nested equilibrium outcomes: stable set inside fine inside coarse.
    ran("subset-chain")
    if not stable <= outcomes_fine:
        fail("subset-chain", "a stable matching is not an equilibrium outcome (fine tiers)")
    if not outcomes_fine <= outcomes_coarse:
        fail("subset-chain", "fine-tier equilibrium outcomes escape the coarse-tier set")

    # Stable matchings are supported by single-school listing profiles.
    ran("stable-support")
    for mu in stable:
        profile = {
            i: Preference(
                () if mu[i] is None else (mu[i],),
                tuple(sorted(set(schools) - ({mu[i]} if mu[i] is not None else set()))),
            )
            for i in students
        }
        idx = table_fine.profile_index(profile)
        if not bool(mask_fine[idx]) or table_fine.matching_at(idx) != mu:
            fail("stable-support", f"single-school profile does not support {mu}")
            break

    # Within-tier acyclicity characterizes implementation of the stable set.
    ran("acyclicity-equivalence")
    if within_tier_acyclic(problem.quotas, problem.priorities, fine):
        if outcomes_fine != stable:
            fail("acyclicity-equivalence", "acyclic structure but equilibrium outcomes != stable set")
    else:
        cycle = next(
            c
            for k in range(1, fine.tier_count + 1)
            for c in find_cycles(problem.quotas, problem.priorities, fine.schools_in(k))
        )
        try:
            constructed = construct_cycle_counterexample(
                problem.quotas, problem.priorities, fine, cycle
            )
        except RuntimeError as exc:
            fail("acyclicity-equivalence", f"cycle construction failed: {exc}")
        else:
            if is_stable(constructed.problem, constructed.outcome):
                fail("acyclicity-equivalence", "constructed equilibrium outcome is stable")

    # Two acyclic structures implement the same (stable) outcome set.
    ran("acyclic-structures-agree")
    candidates = [fine, coarse, finest_tiers(schools, schools), finest_tiers(schools, schools[::-1])]
    acyclic = [
        t for t in candidates if within_tier_acyclic(problem.quotas, problem.priorities, t)
    ][:2]
    sets = []
    for t in acyclic:
        if _tiers_key(t) == _tiers_key(fine):
            sets.append(outcomes_fine)
        elif _tiers_key(t) == _tiers_key(coarse):
            sets.append(outcomes_coarse)
        else:
            sets.append(
                _outcomes_of_mask(
                    tbl := outcome_table(problem, t, "tda", cache=False), tbl.nash_mask()
                )
            )
    if len(sets) == 2 and not (sets[0] == sets[1] == stable):
        fail("acyclic-structures-agree", "acyclic tier structures disagree on equilibrium outcomes")

    # Reshuffling bridges the tiered mechanism and plain deferred acceptance.
    ran("reshuffle-bridge")
    shuffle_fine = _reshuffle_index_map(table_fine, fine)
    all_profiles = np.arange(table_fine.size)
    mapped = _remap_profiles(table_fine, all_profiles, shuffle_fine)
    if not (
        np.array_equal(table_fine.codes, table_fine.codes[mapped])
        and np.array_equal(table_fine.codes, table_da.codes[mapped])
    ):
        fail("reshuffle-bridge", "triple equality with the reshuffled profile fails")

    # Reshuffled fine-tier equilibria remain equilibria under coarse tiers.
    ran("reshuffled-equilibria-transfer")
    eq_idx = np.nonzero(mask_fine)[0]
    mapped_eq = _remap_profiles(table_fine, eq_idx, shuffle_fine)
    if not bool(mask_coarse[mapped_eq].all()):
        fail("reshuffled-equilibria-transfer", "a reshuffled equilibrium is not one under coarse tiers")

    # At any equilibrium, a truthful unilateral report changes nothing for its owner.
    ran("truthful-equivalence")
    truthful_digits = [
        table_fine.strategy_index(canonicalize(problem.preferences[i])) for i in students
    ]
    for k in range(len(students)):
        own = table_fine._digits[mapped_eq, k]
        swapped = mapped_eq + (truthful_digits[k] - own) * int(table_fine._radix[k])
        if not np.array_equal(table_da.codes[mapped_eq, k], table_da.codes[swapped, k]):
            fail("truthful-equivalence", f"equilibrium outcome moves for student {students[k]}")
            break

    # The truthful tiered outcome is stable relative to the tier structure.
    ran("tier-stability")
    for t in (fine, coarse):
        tiered = problem.with_tiers(t)
        if not is_stable_wrt_tiers(tiered, apply_mechanism(tiered, "tda")):
            fail("tier-stability", "truthful tiered outcome violates tier-relative stability")

    # Reordering a report into within-tier true order is never harmful.
    ran("consistency-dominance")
    for k, student in enumerate(students):
        ranks = table_fine.code_ranks(problem.preferences[student])[table_fine.outcome_matrix(k)]
        for a, strat in enumerate(strategies):
            image = table_fine.strategy_index(
                within_tier_consistent(strat, problem.preferences[student], fine)
            )
            if image != a and not np.all(ranks[image] <= ranks[a]):
                fail(
                    "consistency-dominance",
                    f"consistent image of strategy {a} can hurt student {student}",
                )

    # Undominated equilibrium outcomes of plain deferred acceptance: exactly
    # the truthful student-optimal matching.
    ran("da-undominated-outcomes")
    mask_da = table_da.nash_mask()
    for k, student in enumerate(students):
        keep = table_da.dominance_undominated(k, problem.preferences[student])
        mask_da &= keep[table_da._digits[:, k]]
    if _outcomes_of_mask(table_da, mask_da) != frozenset({sosm(problem)}):
        fail("da-undominated-outcomes", "undominated outcomes differ from the truthful optimum")

    if probe_conjecture and not within_tier_acyclic(problem.quotas, problem.priorities, fine):
        blocks: dict[int, list[str]] = {}
        for s in schools:
            blocks.setdefault(fine.tier_of[s], []).append(s)
        order = sorted(blocks)
        for perm in itertools.permutations(order):
            relabel = TierStructure(
                {s: perm.index(k) + 1 for k, block in blocks.items() for s in block}
            )
            tbl = outcome_table(problem, relabel, "tda", cache=False)
            if _outcomes_of_mask(tbl, tbl.nash_mask()) != outcomes_fine:
                probes.append(
                    {"problem": dump, "relabelled": {s: relabel.tier_of[s] for s in schools}}
                )
                break

    return counts, failures, probes


def _trial_worker(args) -> tuple[dict[str, int], list[HarnessFailure], list[dict]]:
    return run_harness_trial(*args)


def verify_theorems(
    seed: int,
    trials: int = 200,
    n_students: int = 3,
    n_schools: int = 3,
    jobs: int = 1,
    probe_conjecture: bool = False,
) -> HarnessReport:
    """Randomized sweep checking every equilibrium-level claim on sampled
    instances; any failure carries a structured counterexample dump."""
    started = time.time()
    report = HarnessReport(trials)
    args = [(t, seed, n_students, n_schools, probe_conjecture) for t in range(trials)]
    if jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_trial_worker, args)
    else:
        results = [run_harness_trial(*a) for a in args]
    for counts, failures, probes in results:
        for check, c in counts.items():
            report.checks[check] = report.checks.get(check, 0) + c
        report.failures.extend(failures)
        report.conjecture_counterexamples.extend(probes)
    report.elapsed = time.time() - started
    return report
