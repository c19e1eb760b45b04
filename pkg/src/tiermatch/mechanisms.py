"""Student-proposing deferred acceptance and its tiered variant.

Both mechanisms are pure functions of their inputs. The tiered variant runs
deferred acceptance tier by tier on the still-unmatched students, freezing
assignments after each round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .core import Matching, Preference, Problem, TierStructure, restrict_preference


def deferred_acceptance(
    students: Sequence[str],
    schools: Sequence[str],
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    preferences: Mapping[str, Preference],
) -> Matching:
    """Student-optimal stable matching for the reported preferences.

    Students propose in a queue ordered by id; the outcome is independent of
    the proposal schedule, so the fixed order only makes traces reproducible.
    Schools with quota 0 reject every proposal.
    """
    rank = {s: {i: k for k, i in enumerate(priorities[s])} for s in schools}
    held: dict[str, list[str]] = {s: [] for s in schools}
    next_choice = {i: 0 for i in students}
    queue = sorted(students)

    while queue:
        student = queue.pop(0)
        choices = preferences[student].acceptable
        while next_choice[student] < len(choices):
            school = choices[next_choice[student]]
            next_choice[student] += 1
            slots = held[school]
            slots.append(student)
            slots.sort(key=lambda i: rank[school][i])
            if len(slots) <= quotas[school]:
                break
            rejected = slots.pop()
            if rejected == student:
                continue
            queue.append(rejected)
            queue.sort()
            break

    assignment: dict[str, Optional[str]] = {i: None for i in students}
    for school, slots in held.items():
        for student in slots:
            assignment[student] = school
    return Matching(assignment)


@dataclass(frozen=True)
class TdaRound:
    """One tier of the tiered mechanism: who took part and who got matched."""

    tier: int
    participants: tuple[str, ...]
    matched: Mapping[str, str]


@dataclass(frozen=True)
class TdaTrace:
    rounds: tuple[TdaRound, ...]
    final: Matching


def tiered_deferred_acceptance(
    students: Sequence[str],
    schools: Sequence[str],
    quotas: Mapping[str, int],
    priorities: Mapping[str, Sequence[str]],
    tiers: TierStructure,
    preferences: Mapping[str, Preference],
) -> TdaTrace:
    """Run deferred acceptance tier by tier, freezing matched students.

    Round k restricts each still-unmatched student's report to the tier-k
    schools; a student with nothing acceptable in the current tier simply
    passes to the next round.
    """
    assignment: dict[str, Optional[str]] = {i: None for i in students}
    unmatched = list(students)
    rounds = []
    for k in range(1, tiers.tier_count + 1):
        tier_schools = tuple(s for s in schools if tiers.tier_of[s] == k)
        participants = tuple(unmatched)
        round_prefs = {i: restrict_preference(preferences[i], tier_schools) for i in participants}
        outcome = deferred_acceptance(participants, tier_schools, quotas, priorities, round_prefs)
        matched = {i: s for i, s in outcome.assignment.items() if s is not None}
        for i, s in matched.items():
            assignment[i] = s
        unmatched = [i for i in unmatched if i not in matched]
        rounds.append(TdaRound(k, participants, matched))
    return TdaTrace(tuple(rounds), Matching(assignment))


def finest_tiers(schools: Sequence[str], order: Sequence[str]) -> TierStructure:
    """One school per tier, ordered as given (the serial version of the mechanism)."""
    if sorted(order) != sorted(schools):
        raise ValueError("order is not a permutation of the school set")
    return TierStructure({s: k + 1 for k, s in enumerate(order)})


def flat_tiers(schools: Sequence[str]) -> TierStructure:
    """Everything in tier 1; the tiered mechanism then degenerates to plain DA."""
    return TierStructure({s: 1 for s in schools})


def apply_mechanism(
    problem: Problem,
    mechanism: str,
    reported: Optional[Mapping[str, Preference]] = None,
    tiers: Optional[TierStructure] = None,
) -> Matching:
    """Uniform entry point: ``mechanism`` is "da" or "tda"."""
    reported = problem.preferences if reported is None else reported
    if mechanism == "da":
        return deferred_acceptance(
            problem.students, problem.schools, problem.quotas, problem.priorities, reported
        )
    if mechanism == "tda":
        tiers = problem.tiers if tiers is None else tiers
        return tiered_deferred_acceptance(
            problem.students, problem.schools, problem.quotas, problem.priorities, tiers, reported
        ).final
    raise ValueError(f"unknown mechanism tag {mechanism!r}")
