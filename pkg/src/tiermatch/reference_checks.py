"""Regression checks replaying every built-in fixture against its documented
outcome. Each check returns (name, passed, detail); the CLI verify command
prints one line per check.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

from .analysis import find_blocking_pairs, find_cycles, is_stable, is_stable_wrt_tiers
from .bayes import enumerate_bne_outcomes, expected_utility, is_bayes_nash
from .core import Matching, Preference, TierStructure
from .fixtures import fixture
from .game import (
    enumerate_nash_outcomes,
    enumerate_undominated_nash_outcomes,
    is_manipulable_at,
    is_nash,
    within_tier_acyclic,
)
from .mechanisms import apply_mechanism


def _m(**assignment) -> Matching:
    return Matching({i: (s if s != "self" else None) for i, s in assignment.items()})


def _pref(acceptable, unacceptable=()) -> Preference:
    return Preference(tuple(acceptable), tuple(unacceptable))


EXP1_EQUILIBRIUM = {
    "1": _pref("cb", "a"),
    "2": _pref("bca"),
    "3": _pref("bc", "a"),
}

PRIOUN_EQUILIBRIUM = {
    "1": _pref("bc", "a"),
    "2": _pref("bc", "a"),
    "3": _pref("bac"),
}

PREFUN_EQUILIBRIUM = {
    "1": (_pref("b", "ac"), _pref("c", "ab")),
    "2": _pref("bc", "a"),
    "3": _pref("bca"),
}

PRIOUN2_EQUILIBRIUM = {
    "1": _pref("ab", "c"),
    "2": _pref("ab", "c"),
    "3": _pref("bac"),
}


def _check(condition: bool, detail: str = "") -> tuple[bool, str]:
    return condition, detail


def check_exp1_mechanism_outputs():
    p = fixture("exp1")
    da = apply_mechanism(p, "da")
    tda = apply_mechanism(p, "tda")
    ok = da == _m(**{"1": "c", "2": "b", "3": "a"}) and tda == _m(**{"1": "a", "2": "b", "3": "c"})
    return _check(ok, f"da={da} tda={tda}")


def check_exp1_profitable_deviation():
    p = fixture("exp1")
    deviated = apply_mechanism(p, "tda", {**p.preferences, "1": EXP1_EQUILIBRIUM["1"]})
    return _check(
        deviated == _m(**{"1": "c", "2": "b", "3": "a"}), f"deviation outcome {deviated}"
    )


def check_exp1_equilibrium():
    p = fixture("exp1")
    out = apply_mechanism(p, "tda", EXP1_EQUILIBRIUM)
    ok = (
        out == _m(**{"1": "c", "2": "a", "3": "b"})
        and is_nash(p, None, "tda", EXP1_EQUILIBRIUM)
        and not is_nash(p, None, "tda", p.preferences)
    )
    return _check(ok, f"tda(Q)={out}")


def check_exp1_equilibrium_outcomes():
    p = fixture("exp1")
    report = enumerate_nash_outcomes(p)
    expected = {_m(**{"1": "c", "2": "a", "3": "b"}), _m(**{"1": "c", "2": "b", "3": "a"})}
    return _check(set(report.outcomes) == expected, f"{len(report.outcomes)} outcomes")


def check_exp1_undominated_filter():
    p = fixture("exp1")
    kept = enumerate_undominated_nash_outcomes(p).outcomes
    reversed_tiers = TierStructure({"a": 2, "b": 1, "c": 1})
    dropped = enumerate_undominated_nash_outcomes(p, reversed_tiers).outcomes
    target = _m(**{"1": "c", "2": "a", "3": "b"})
    return _check(target in kept and target not in dropped, "undominated filter under both tiers")


def check_exp1_cycles():
    p = fixture("exp1")
    cycles = find_cycles(p.quotas, p.priorities, ["b", "c"])
    witness = any(
        c.school_a == "b" and c.school_b == "c" and (c.high, c.mid, c.low) == ("1", "2", "3")
        for c in cycles
    )
    return _check(
        witness and not within_tier_acyclic(p.quotas, p.priorities, p.tiers),
        f"{len(cycles)} tier-2 cycles",
    )


def check_exp2_manipulability():
    p = fixture("exp2")
    fine = TierStructure({"a": 1, "b": 2, "c": 3})
    coarse = TierStructure({"a": 1, "b": 2, "c": 2})
    truthful_fine = is_nash(p, fine, "tda", p.preferences)
    truthful_coarse = is_nash(p, coarse, "tda", p.preferences)
    manipulable, witness = is_manipulable_at(p.with_tiers(coarse), coarse)
    documented = apply_mechanism(
        p.with_tiers(coarse), "tda", {**p.preferences, "3": _pref("bc", "a")}
    )
    ok = (
        truthful_fine
        and not truthful_coarse
        and manipulable
        and witness.student == "3"
        and witness.outcome == "b"
        and documented["3"] == "b"
    )
    return _check(ok, f"witness={witness}")


def check_exp3_stability():
    p = fixture("exp3")
    out_fine = apply_mechanism(p, "tda", tiers=TierStructure({"a": 1, "b": 2, "c": 3}))
    coarse = TierStructure({"a": 1, "b": 2, "c": 2})
    out_coarse = apply_mechanism(p, "tda", tiers=coarse)
    pairs = {(bp.student, bp.school) for bp in find_blocking_pairs(p, out_coarse)}
    ok = (
        out_fine == _m(**{"1": "a", "2": "b", "3": "c"})
        and is_stable(p, out_fine)
        and out_coarse == _m(**{"1": "a", "2": "c", "3": "b"})
        and not is_stable(p, out_coarse)
        and ("1", "c") in pairs
        and is_stable_wrt_tiers(p.with_tiers(coarse), out_coarse)
    )
    return _check(ok, f"coarse outcome {out_coarse}, blocking {sorted(pairs)}")


def check_expB1_outcomes():
    p = fixture("expB1")
    base = enumerate_nash_outcomes(p).outcomes
    moved = enumerate_nash_outcomes(p, TierStructure({"a": 1, "b": 1, "c": 2})).outcomes
    keep = _m(**{"1": "a", "2": "b", "3": "c"})
    extra = _m(**{"1": "a", "2": "c", "3": "b"})
    return _check(
        set(base) == {keep} and set(moved) == {keep, extra},
        f"base={len(base)} moved={len(moved)}",
    )


def check_expB2_structure():
    p = fixture("expB2")
    return _check(
        not within_tier_acyclic(p.quotas, p.priorities, p.tiers),
        "tier-2 cycle present by design",
    )


def check_prioun_replay():
    bp = fixture("exp-prioun")
    expected = (
        _m(**{"1": "b", "2": "c", "3": "a"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    expected_da = (
        _m(**{"1": "b", "2": "a", "3": "c"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    tda = tuple(bp.outcome(PRIOUN_EQUILIBRIUM, k) for k in range(2))
    da = tuple(apply_mechanism(bp.state_problem(k), "da") for k in range(2))
    return _check(tda == expected and da == expected_da, f"tda={tda}")


def check_prefun_replay():
    bp = fixture("expB3-prefun")
    expected = (
        _m(**{"1": "b", "2": "c", "3": "a"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    expected_da = (
        _m(**{"1": "b", "2": "a", "3": "c"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    tda = tuple(bp.outcome(PREFUN_EQUILIBRIUM, k) for k in range(2))
    da = tuple(apply_mechanism(bp.state_problem(k), "da") for k in range(2))
    return _check(tda == expected and da == expected_da, f"tda={tda}")


def check_prioun2_replay():
    bp = fixture("expB4-prioun2")
    expected = (
        _m(**{"1": "a", "2": "b", "3": "c"}),
        _m(**{"1": "b", "2": "a", "3": "c"}),
    )
    expected_da = (
        _m(**{"1": "a", "2": "c", "3": "b"}),
        _m(**{"1": "b", "2": "a", "3": "c"}),
    )
    tda = tuple(bp.outcome(PRIOUN2_EQUILIBRIUM, k) for k in range(2))
    da = tuple(apply_mechanism(bp.state_problem(k), "da") for k in range(2))
    return _check(tda == expected and da == expected_da, f"tda={tda}")


def check_prioun_bne():
    bp = fixture("exp-prioun")
    expected = (
        _m(**{"1": "b", "2": "c", "3": "a"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    report = enumerate_bne_outcomes(bp, "tda")
    value = expected_utility(bp, PRIOUN_EQUILIBRIUM, "2")
    ok = (
        report.outcome_tuples == frozenset({expected})
        and value == Fraction(13, 5)
        and is_bayes_nash(bp, "tda", PRIOUN_EQUILIBRIUM)
        and is_bayes_nash(bp, "da", bp.truthful_profile())
        and not is_bayes_nash(bp, "tda", bp.truthful_profile())
    )
    return _check(ok, f"tuples={len(report.outcome_tuples)} EU2={value}")


def check_prioun_failure_exhibits():
    bp = fixture("exp-prioun")
    expected = (
        _m(**{"1": "b", "2": "c", "3": "a"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    state0 = bp.state_problem(0)
    pairs = {(p.student, p.school) for p in find_blocking_pairs(state0, expected[0])}
    acyclic_both = all(
        within_tier_acyclic(bp.quotas, bp.state_priorities(k), bp.tiers) for k in range(2)
    )
    da_tuples = enumerate_bne_outcomes(bp, "da").outcome_tuples
    ok = (
        not is_stable(state0, expected[0])
        and ("2", "a") in pairs
        and acyclic_both
        and expected not in da_tuples
    )
    return _check(ok, f"state-0 blocking pairs {sorted(pairs)}")


def check_prefun_bne():
    bp = fixture("expB3-prefun")
    expected = (
        _m(**{"1": "b", "2": "c", "3": "a"}),
        _m(**{"1": "c", "2": "b", "3": "a"}),
    )
    report = enumerate_bne_outcomes(bp, "tda")
    return _check(
        report.outcome_tuples == frozenset({expected}),
        f"tuples={len(report.outcome_tuples)} over {report.equilibrium_count} equilibria",
    )


def check_prioun2_bne():
    bp = fixture("expB4-prioun2")
    expected = (
        _m(**{"1": "a", "2": "b", "3": "c"}),
        _m(**{"1": "b", "2": "a", "3": "c"}),
    )
    report = enumerate_bne_outcomes(bp, "tda")
    ok = report.outcome_tuples == frozenset({expected}) and expected[0]["3"] == "c"
    return _check(ok, f"tuples={len(report.outcome_tuples)}")


EXAMPLE_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "exp1-mechanism-outputs": check_exp1_mechanism_outputs,
    "exp1-profitable-deviation": check_exp1_profitable_deviation,
    "exp1-equilibrium": check_exp1_equilibrium,
    "exp1-equilibrium-outcomes": check_exp1_equilibrium_outcomes,
    "exp1-undominated-filter": check_exp1_undominated_filter,
    "exp1-cycles": check_exp1_cycles,
    "exp2-manipulability": check_exp2_manipulability,
    "exp3-stability": check_exp3_stability,
    "expB1-outcomes": check_expB1_outcomes,
    "expB2-structure": check_expB2_structure,
    "exp-prioun-replay": check_prioun_replay,
    "expB3-prefun-replay": check_prefun_replay,
    "expB4-prioun2-replay": check_prioun2_replay,
}

BAYES_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "exp-prioun-bne": check_prioun_bne,
    "exp-prioun-failure-exhibits": check_prioun_failure_exhibits,
    "expB3-prefun-bne": check_prefun_bne,
    "expB4-prioun2-bne": check_prioun2_bne,
}


def run_checks(checks: dict[str, Callable[[], tuple[bool, str]]]) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in checks.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"error: {exc}"
        results.append((name, ok, detail))
    return results
