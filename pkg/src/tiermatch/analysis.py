"""Stability diagnostics, the brute-force stable-set oracle, priority-cycle
detection, and responsive comparison of school assignments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .core import GuardExceeded, Matching, Preference, Problem, TierStructure
from .mechanisms import deferred_acceptance

BETTER = "better"
WORSE = "worse"
EQUAL = "equal"
INCOMPARABLE = "incomparable"

JUSTIFIED_ENVY = "justified-envy"
WASTEFUL = "wasteful"


@dataclass(frozen=True)
class BlockingPair:
    student: str
    school: str
    kind: str


def unacceptable_assignments(
    problem: Problem, matching: Matching, preferences: Optional[Mapping[str, Preference]] = None
) -> list[str]:
    """Students assigned a school they rank below staying unmatched."""
    preferences = problem.preferences if preferences is None else preferences
    return [
        i
        for i in problem.students
        if matching[i] is not None and preferences[i].prefers(None, matching[i])
    ]


def find_blocking_pairs(
    problem: Problem, matching: Matching, preferences: Optional[Mapping[str, Preference]] = None
) -> list[BlockingPair]:
    """All student-school pairs violating no-justified-envy or non-wastefulness.

    Individual-rationality violations are not blocking pairs; use
    ``unacceptable_assignments`` for those.
    """
    bad = matching.issues(problem)
    if bad:
        raise ValueError("; ".join(bad))
    preferences = problem.preferences if preferences is None else preferences
    pairs = []
    for i in problem.students:
        for s in problem.schools:
            if not preferences[i].prefers(s, matching[i]):
                continue
            assigned = matching.students_at(s)
            if len(assigned) < problem.quotas[s]:
                pairs.append(BlockingPair(i, s, WASTEFUL))
            elif any(
                problem.priority_rank(s, i) < problem.priority_rank(s, j) for j in assigned
            ):
                pairs.append(BlockingPair(i, s, JUSTIFIED_ENVY))
    return pairs


def is_stable(
    problem: Problem, matching: Matching, preferences: Optional[Mapping[str, Preference]] = None
) -> bool:
    """Individually rational, no justified envy, non-wasteful."""
    return not unacceptable_assignments(problem, matching, preferences) and not find_blocking_pairs(
        problem, matching, preferences
    )


def is_stable_wrt_tiers(problem: Problem, matching: Matching) -> bool:
    """Tier-relative stability: every blocking pair points at a strictly later tier.

    A blocking pair whose student is unmatched always fails the tier condition.
    """
    if unacceptable_assignments(problem, matching):
        return False
    for pair in find_blocking_pairs(problem, matching):
        assigned = matching[pair.student]
        if assigned is None:
            return False
        if problem.tiers.tier_of[assigned] >= problem.tiers.tier_of[pair.school]:
            return False
    return True


def _feasible_matchings(problem: Problem) -> Iterable[Matching]:
    students = problem.students
    options = [None] + list(problem.schools)
    for combo in itertools.product(options, repeat=len(students)):
        counts: dict[str, int] = {}
        ok = True
        for s in combo:
            if s is None:
                continue
            counts[s] = counts.get(s, 0) + 1
            if counts[s] > problem.quotas[s]:
                ok = False
                break
        if ok:
            yield Matching(dict(zip(students, combo)))


def stable_set(problem: Problem, max_cells: int = 25) -> frozenset[Matching]:
    """All stable matchings, by enumerating every quota-feasible assignment.

    Independent of the mechanism implementations on purpose: this is the
    oracle they are checked against.
    """
    cells = len(problem.students) * len(problem.schools)
    if cells > max_cells:
        raise GuardExceeded(
            f"stable_set enumerates all assignments; {cells} cells exceeds the bound {max_cells}"
        )
    return frozenset(m for m in _feasible_matchings(problem) if is_stable(problem, m))


def sosm(problem: Problem) -> Matching:
    """Student-optimal stable matching: deferred acceptance on the true profile."""
    return deferred_acceptance(
        problem.students, problem.schools, problem.quotas, problem.priorities, problem.preferences
    )


@dataclass(frozen=True)
class Cycle:
    """Witness for a priority cycle between two schools.

    At ``school_a`` the order is high > mid > low, while ``school_b`` ranks
    low above high. ``extras_a``/``extras_b`` are disjoint scarcity sets that
    fill the remaining seats (sizes quota-1) ahead of mid resp. high.
    """

    school_a: str
    school_b: str
    high: str
    mid: str
    low: str
    extras_a: frozenset[str]
    extras_b: frozenset[str]


def _above(priority: Sequence[str], student: str) -> list[str]:
    return list(priority[: priority.index(student)])


def find_cycles(
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    schools: Iterable[str],
) -> list[Cycle]:
    """All cycle witnesses among the given schools.

    For each school pair and student triple satisfying the priority pattern,
    the scarcity sets are chosen deterministically: candidates are scanned in
    priority order and the first feasible disjoint pair is kept.
    """
    schools = sorted(schools)
    cycles = []
    students_all = None
    for a, b in itertools.permutations(schools, 2):
        if quotas[a] < 1 or quotas[b] < 1:
            continue
        if students_all is None:
            students_all = sorted(priorities[a])
        order_a = list(priorities[a])
        order_b = list(priorities[b])
        for high, mid, low in itertools.permutations(students_all, 3):
            if not (
                order_a.index(high) < order_a.index(mid) < order_a.index(low)
                and order_b.index(low) < order_b.index(high)
            ):
                continue
            witness = _pick_scarcity_sets(quotas, order_a, order_b, a, b, high, mid, low)
            if witness is not None:
                extras_a, extras_b = witness
                cycles.append(Cycle(a, b, high, mid, low, extras_a, extras_b))
    return cycles


def _pick_scarcity_sets(quotas, order_a, order_b, a, b, high, mid, low):
    banned = {high, mid, low}
    pool_a = [x for x in _above(order_a, mid) if x not in banned]
    pool_b_full = [x for x in _above(order_b, high) if x not in banned]
    need_a, need_b = quotas[a] - 1, quotas[b] - 1
    if len(pool_a) < need_a:
        return None
    for chosen_a in itertools.combinations(pool_a, need_a):
        pool_b = [x for x in pool_b_full if x not in chosen_a]
        if len(pool_b) >= need_b:
            return frozenset(chosen_a), frozenset(pool_b[:need_b])
    return None


def within_tier_acyclic(
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    tiers: TierStructure,
) -> bool:
    """No cycle among the schools of any single tier."""
    for k in range(1, tiers.tier_count + 1):
        if find_cycles(quotas, priorities, tiers.schools_in(k)):
            return False
    return True


def is_within_tier_acyclic(problem: Problem) -> bool:
    return within_tier_acyclic(problem.quotas, problem.priorities, problem.tiers)


def responsive_dominates(
    school: str,
    set_a: Iterable[str],
    set_b: Iterable[str],
    quota: int,
    priority: Sequence[str],
) -> str:
    """Compare two student sets for a school under responsive preferences.

    Both sets are padded with empty-seat sentinels (ranked below every
    student), sorted by priority, and compared seat by seat. The verdict
    describes ``set_a`` relative to ``set_b``: better, worse, equal, or
    incomparable (responsiveness only generates a partial order).
    """
    set_a, set_b = list(set_a), list(set_b)
    if len(set_a) > quota or len(set_b) > quota:
        raise ValueError(f"assignment exceeds quota {quota} at school {school}")
    sentinel = len(priority)
    rank = {i: k for k, i in enumerate(priority)}

    def padded(students):
        ranks = sorted(rank[i] for i in students)
        return ranks + [sentinel] * (quota - len(students))

    ranks_a, ranks_b = padded(set_a), padded(set_b)
    a_wins = any(x < y for x, y in zip(ranks_a, ranks_b))
    b_wins = any(x > y for x, y in zip(ranks_a, ranks_b))
    if a_wins and b_wins:
        return INCOMPARABLE
    if a_wins:
        return BETTER
    if b_wins:
        return WORSE
    return EQUAL


def is_refinement(t: TierStructure, t_prime: TierStructure) -> bool:
    """True when ``t`` refines ``t_prime``: any strict tier order in the coarse
    structure is preserved in the fine one."""
    schools = list(t.tier_of)
    if set(schools) != set(t_prime.tier_of):
        raise ValueError("tier structures cover different school sets")
    for a, b in itertools.permutations(schools, 2):
        if t_prime.tier_of[a] > t_prime.tier_of[b] and not t.tier_of[a] > t.tier_of[b]:
            return False
    return True
