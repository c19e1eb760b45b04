import itertools
import random

import pytest

from tiermatch.analysis import (
    BETTER,
    EQUAL,
    INCOMPARABLE,
    WORSE,
    find_blocking_pairs,
    find_cycles,
    is_refinement,
    is_stable,
    is_stable_wrt_tiers,
    is_within_tier_acyclic,
    responsive_dominates,
    sosm,
    stable_set,
    unacceptable_assignments,
    within_tier_acyclic,
)
from tiermatch.core import GuardExceeded, Matching, Problem, TierStructure
from tiermatch.fixtures import fixture
from tiermatch.game import strategy_space
from tiermatch.mechanisms import apply_mechanism, finest_tiers


def _match(**kw):
    return Matching({i: (None if s == "self" else s) for i, s in kw.items()})


def _random_problem(rng):
    students = ("1", "2", "3")
    schools = ("a", "b", "c")
    strategies = strategy_space(schools)
    return Problem(
        students,
        schools,
        {s: rng.choice([0, 1, 1, 2]) for s in schools},
        {s: tuple(rng.sample(students, 3)) for s in schools},
        TierStructure({s: rng.choice([1, 1, 2]) for s in schools[:-1]} | {schools[-1]: 2}),
        {i: rng.choice(strategies) for i in students},
    )


def test_blocking_pairs_examples():
    p = fixture("exp1")
    pairs = find_blocking_pairs(p, _match(**{"1": "c", "2": "a", "3": "b"}))
    assert ("2", "b") in {(x.student, x.school) for x in pairs}
    assert find_blocking_pairs(p, _match(**{"1": "c", "2": "b", "3": "a"})) == []
    p3 = fixture("exp3")
    pairs3 = find_blocking_pairs(p3, _match(**{"1": "a", "2": "c", "3": "b"}))
    assert ("1", "c") in {(x.student, x.school) for x in pairs3}


def test_blocking_pair_kinds():
    p = fixture("exp1")
    pairs = find_blocking_pairs(p, _match(**{"1": "self", "2": "self", "3": "self"}))
    assert pairs and all(x.kind == "wasteful" for x in pairs)


def test_is_stable_examples():
    p = fixture("exp1")
    assert is_stable(p, _match(**{"1": "c", "2": "b", "3": "a"}))
    assert not is_stable(p, _match(**{"1": "c", "2": "a", "3": "b"}))
    assert not is_stable(p, _match(**{"1": "self", "2": "self", "3": "self"}))


def test_individual_rationality_flagged_separately():
    p = fixture("exp3")  # student 2 finds school a unacceptable
    m = _match(**{"1": "c", "2": "a", "3": "b"})
    assert unacceptable_assignments(p, m) == ["2"]
    assert not is_stable(p, m)


def test_matching_with_unknown_ids_rejected():
    p = fixture("exp1")
    with pytest.raises(ValueError):
        find_blocking_pairs(p, Matching({"1": "z", "2": None, "3": None}))


def test_stable_set_example_1():
    p = fixture("exp1")
    assert stable_set(p) == frozenset({_match(**{"1": "c", "2": "b", "3": "a"})})


def test_stable_set_all_zero_quotas():
    p = fixture("exp1")
    zero = Problem(
        p.students, p.schools, {s: 0 for s in p.schools}, p.priorities, p.tiers, p.preferences
    )
    assert stable_set(zero) == frozenset({_match(**{"1": "self", "2": "self", "3": "self"})})


def test_stable_set_guard():
    p = fixture("exp1")
    with pytest.raises(GuardExceeded):
        stable_set(p, max_cells=8)


def test_stable_set_contains_student_optimal_element():
    rng = random.Random(5)
    for _ in range(20):
        p = _random_problem(rng)
        stable = stable_set(p)
        assert stable  # never empty with a complete true profile
        optimum = sosm(p)
        assert optimum in stable
        for mu in stable:
            for i in p.students:
                assert not p.preferences[i].prefers(mu[i], optimum[i])


def test_stability_matches_clause_decomposition():
    rng = random.Random(13)
    p = fixture("exp1")
    options = [None, "a", "b", "c"]
    for combo in itertools.product(options, repeat=3):
        counts = {s: combo.count(s) for s in p.schools}
        if any(counts[s] > p.quotas[s] for s in p.schools):
            continue
        m = Matching(dict(zip(p.students, combo)))
        decomposed = not find_blocking_pairs(p, m) and not unacceptable_assignments(p, m)
        assert is_stable(p, m) == decomposed


def test_sosm_examples():
    assert sosm(fixture("exp1")) == _match(**{"1": "c", "2": "b", "3": "a"})


def test_tier_relative_stability_examples():
    p = fixture("exp1")
    assert is_stable_wrt_tiers(p, _match(**{"1": "a", "2": "b", "3": "c"}))
    assert is_stable_wrt_tiers(p, _match(**{"1": "c", "2": "b", "3": "a"}))  # stable => tier-stable
    p3 = fixture("exp3").with_tiers(TierStructure({"a": 1, "b": 2, "c": 2}))
    out = _match(**{"1": "a", "2": "c", "3": "b"})
    assert is_stable_wrt_tiers(p3, out) and not is_stable(p3, out)


def test_tier_stability_fails_same_tier_blocking():
    p = fixture("exp1")
    # Student 1 sits at tier-2 school b while blocking with same-tier school c,
    # so the strictly-earlier-tier escape clause does not apply.
    m = _match(**{"1": "b", "2": "c", "3": "a"})
    pairs = {(x.student, x.school) for x in find_blocking_pairs(p, m)}
    assert ("1", "c") in pairs
    assert not is_stable_wrt_tiers(p, m)


def test_truthful_tda_always_tier_stable():
    rng = random.Random(29)
    for _ in range(30):
        p = _random_problem(rng)
        assert is_stable_wrt_tiers(p, apply_mechanism(p, "tda"))


def test_find_cycles_example_1():
    p = fixture("exp1")
    cycles = find_cycles(p.quotas, p.priorities, ["b", "c"])
    assert any(
        (c.school_a, c.school_b, c.high, c.mid, c.low) == ("b", "c", "1", "2", "3")
        and c.extras_a == frozenset()
        and c.extras_b == frozenset()
        for c in cycles
    )
    # every returned witness satisfies the defining clauses
    for c in cycles:
        ra, rb = p.priorities[c.school_a], p.priorities[c.school_b]
        assert ra.index(c.high) < ra.index(c.mid) < ra.index(c.low)
        assert rb.index(c.low) < rb.index(c.high)
        assert len(c.extras_a) == p.quotas[c.school_a] - 1
        assert len(c.extras_b) == p.quotas[c.school_b] - 1
        assert not (c.extras_a & c.extras_b)
        assert all(ra.index(x) < ra.index(c.mid) for x in c.extras_a)
        assert all(rb.index(x) < rb.index(c.high) for x in c.extras_b)


def test_cycles_need_two_schools():
    p = fixture("exp1")
    assert find_cycles(p.quotas, p.priorities, ["b"]) == []


def test_identical_priorities_are_acyclic():
    quotas = {"a": 1, "b": 1}
    priorities = {"a": ("1", "2", "3"), "b": ("1", "2", "3")}
    assert find_cycles(quotas, priorities, ["a", "b"]) == []


def test_scarcity_sets_found_when_greedy_would_collide():
    # One candidate serves school a, and b's pool must dodge a's pick.
    quotas = {"a": 2, "b": 2}
    priorities = {
        "a": ("x", "1", "2", "y", "3"),
        "b": ("x", "y", "3", "1", "2"),
    }
    cycles = find_cycles(quotas, priorities, ["a", "b"])
    match = [c for c in cycles if (c.high, c.mid, c.low) == ("1", "2", "3")]
    assert match
    c = match[0]
    assert c.extras_a == frozenset({"x"}) and c.extras_b == frozenset({"y"})


def test_within_tier_acyclicity_examples():
    assert not is_within_tier_acyclic(fixture("exp1"))
    p = fixture("exp1")
    assert within_tier_acyclic(p.quotas, p.priorities, finest_tiers(p.schools, p.schools))
    b2 = fixture("expB2")
    assert not is_within_tier_acyclic(b2)


def test_responsive_dominates_examples():
    priority = ("1", "3", "2")  # Example-1 school a
    assert responsive_dominates("a", {"2"}, {"3"}, 1, priority) == WORSE
    assert responsive_dominates("a", {"2"}, {"2"}, 1, priority) == EQUAL
    quota2 = ("1", "2", "3", "4")
    assert responsive_dominates("s", {"1", "4"}, {"2", "3"}, 2, quota2) == INCOMPARABLE
    assert responsive_dominates("s", {"1", "2"}, {"3"}, 2, quota2) == BETTER
    with pytest.raises(ValueError):
        responsive_dominates("s", {"1", "2", "3"}, {"1"}, 2, quota2)


def test_empty_seat_ranks_below_every_student():
    priority = ("1", "2")
    assert responsive_dominates("s", {"2"}, set(), 1, priority) == BETTER


def test_responsive_verdicts_are_antisymmetric():
    rng = random.Random(53)
    students = [str(k) for k in range(1, 7)]
    flipped = {BETTER: WORSE, WORSE: BETTER, EQUAL: EQUAL, INCOMPARABLE: INCOMPARABLE}
    for _ in range(50):
        priority = tuple(rng.sample(students, 6))
        quota = rng.randint(1, 4)
        a = set(rng.sample(students, rng.randint(0, quota)))
        b = set(rng.sample(students, rng.randint(0, quota)))
        verdict = responsive_dominates("s", a, b, quota, priority)
        assert responsive_dominates("s", b, a, quota, priority) == flipped[verdict]
        if a == b:
            assert verdict == EQUAL


def test_quota_above_student_count():
    p = fixture("exp1")
    big = Problem(
        p.students, p.schools, {"a": 5, "b": 1, "c": 1}, p.priorities, p.tiers, p.preferences
    )
    out = apply_mechanism(big, "da")
    assert is_stable(big, out)
    assert out in stable_set(big)


def test_is_refinement_examples():
    t_fine = TierStructure({"a": 1, "b": 2, "c": 3})
    t_coarse = TierStructure({"a": 1, "b": 2, "c": 2})
    assert is_refinement(t_fine, t_coarse)
    assert is_refinement(t_fine, t_fine)
    assert not is_refinement(TierStructure({"a": 2, "b": 1, "c": 1}), t_coarse)


def test_equilibrium_outcomes_avoid_acyclic_tiers():
    # With no cycle among a tier's schools, no equilibrium outcome has a
    # blocking pair pointing at that tier.
    from tiermatch.game import enumerate_nash_outcomes

    rng = random.Random(37)
    for _ in range(8):
        p = _random_problem(rng)
        report = enumerate_nash_outcomes(p)
        clean_tiers = [
            k
            for k in range(1, p.tiers.tier_count + 1)
            if not find_cycles(p.quotas, p.priorities, p.tiers.schools_in(k))
        ]
        for mu in report.outcomes:
            for pair in find_blocking_pairs(p, mu):
                assert p.tiers.tier_of[pair.school] not in clean_tiers
